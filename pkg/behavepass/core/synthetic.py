"""
Deterministic synthetic BehavePass-style datasets.

Each sensor axis of a user follows an order-2 autoregressive process plus two
user-specific sinusoids. The recording device adds its resonance tone (one
frequency per device, per-axis amplitude and phase), applies a per-axis gain
and offset and adds white noise:

    observed = device_gain * (user_signal + device_tone) + device_offset + noise

Gain and offset vanish under per-session z-scoring; the tone does not, so it
is what lets a model recognise the device. Flat calibration ranges (gain 1,
offset 0) switch the whole device model off, tone included.

Touch and keystroke streams are drawn from per-user timing and coordinate
distributions. Every random quantity comes from its own named Philox stream
(see ``behavepass.core.rng``), so the output is a pure function of the config.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
from pydantic import ValidationError
from scipy.signal import lfilter

from behavepass.core import rng as streams
from behavepass.core.errors import ConfigurationError
from behavepass.schemas.config import SynthConfig
from behavepass.schemas.dataset import (
    DEFAULT_SCREEN,
    SENSOR_MODALITIES,
    TOUCH_CHANNEL,
    ChannelSeries,
    Dataset,
    ModalityId,
    Session,
    Split,
    Task,
    UserRecord,
)

logger = logging.getLogger(__name__)

SAMPLE_PERIOD_MS = 5.0  # 200 Hz
BURN_IN = 200
KEY_CODES = np.array([32] + list(range(97, 123)))

SENSOR_BASELINE = {
    ModalityId.ACCELEROMETER: np.array([0.0, 4.9, 8.5]),
    ModalityId.GRAVITY: np.array([0.0, 4.9, 8.5]),
    ModalityId.GYROSCOPE: np.zeros(3),
    ModalityId.LINEAR_ACCELEROMETER: np.zeros(3),
    ModalityId.MAGNETOMETER: np.array([20.0, -15.0, -40.0]),
}
SENSOR_SCALE = {
    ModalityId.ACCELEROMETER: 1.0,
    ModalityId.GRAVITY: 0.3,
    ModalityId.GYROSCOPE: 0.5,
    ModalityId.LINEAR_ACCELEROMETER: 0.8,
    ModalityId.MAGNETOMETER: 3.0,
}

OWNER, IMPOSTOR = 0, 1


@dataclass(frozen=True)
class SensorSignature:
    """Per-axis AR(2) coefficients and two sinusoids (arrays of shape (3,) / (3, 2))."""

    a1: np.ndarray
    a2: np.ndarray
    frequencies: np.ndarray
    amplitudes: np.ndarray


@dataclass(frozen=True)
class TouchSignature:
    interval_ms: float
    center: np.ndarray
    spread: float
    stroke_speed: float
    stroke_length: int
    key_interval_ms: float
    key_weights: np.ndarray

    def blend(self, other: "TouchSignature", weight: float) -> "TouchSignature":
        """Move ``weight`` of the way from this signature toward ``other``."""
        mix = lambda a, b: (1.0 - weight) * a + weight * b
        return TouchSignature(
            interval_ms=mix(self.interval_ms, other.interval_ms),
            center=mix(self.center, other.center),
            spread=mix(self.spread, other.spread),
            stroke_speed=mix(self.stroke_speed, other.stroke_speed),
            stroke_length=int(round(mix(self.stroke_length, other.stroke_length))),
            key_interval_ms=mix(self.key_interval_ms, other.key_interval_ms),
            key_weights=mix(self.key_weights, other.key_weights),
        )


@dataclass(frozen=True)
class UserSignature:
    sensors: Dict[ModalityId, SensorSignature]
    task_scale: Dict[Task, float]
    touch: TouchSignature


@dataclass(frozen=True)
class DeviceProfile:
    gain: Dict[ModalityId, np.ndarray]
    offset: Dict[ModalityId, np.ndarray]
    resonance_hz: float
    resonance: Dict[ModalityId, np.ndarray]
    phase: Dict[ModalityId, np.ndarray]

    def tone(self, modality: ModalityId, n: int) -> np.ndarray:
        """Resonance tone of shape (n, 3) at the 200 Hz sample instants."""
        seconds = np.arange(n) * SAMPLE_PERIOD_MS / 1000.0
        angle = 2.0 * np.pi * self.resonance_hz * seconds[:, None] + self.phase[modality]
        return self.resonance[modality] * np.sin(angle)


def _modality_index(modality: ModalityId) -> int:
    return list(ModalityId).index(modality)


def _task_index(task: Task) -> int:
    return list(Task).index(task)


def user_signature(config: SynthConfig, user_index: int, impostor: bool = False) -> UserSignature:
    """Behavioural signature of one person (owner or skilled impostor)."""
    domain = streams.IMPOSTOR_SIGNATURE if impostor else streams.SIGNATURE
    rng = streams.stream(config.rng_seed, domain, user_index)

    sensors = {}
    for modality in SENSOR_MODALITIES:
        radius = rng.uniform(*config.ar_radius_range, size=3)
        angle = np.pi * rng.uniform(*config.ar_angle_range, size=3)
        sensors[modality] = SensorSignature(
            a1=2.0 * radius * np.cos(angle),
            a2=-(radius**2),
            frequencies=rng.uniform(*config.frequency_range, size=(3, 2)),
            amplitudes=rng.uniform(0.5, 1.5, size=(3, 2)),
        )
    task_scale = {task: float(rng.uniform(0.6, 1.4)) for task in Task}
    width, height = DEFAULT_SCREEN
    touch = TouchSignature(
        interval_ms=float(rng.uniform(1000.0 / 15.0, 1000.0 / 5.0)),
        center=np.array([rng.uniform(0.25, 0.75) * width, rng.uniform(0.3, 0.7) * height]),
        spread=float(rng.uniform(0.03, 0.12) * width),
        stroke_speed=float(rng.uniform(10.0, 45.0)),
        stroke_length=int(rng.integers(5, 16)),
        key_interval_ms=float(rng.uniform(120.0, 400.0)),
        key_weights=rng.dirichlet(np.full(len(KEY_CODES), 0.8)),
    )
    return UserSignature(sensors=sensors, task_scale=task_scale, touch=touch)


def device_profile(config: SynthConfig, device_index: int) -> DeviceProfile:
    """Per-axis gain, offset and resonance fingerprint of one device."""
    rng = streams.stream(config.rng_seed, streams.DEVICE, device_index)
    gain, offset = {}, {}
    for modality in SENSOR_MODALITIES:
        gain[modality] = rng.uniform(*config.device_gain_range, size=3)
        offset[modality] = rng.uniform(*config.device_offset_range, size=3)
    resonance_hz = float(rng.uniform(*config.device_resonance_hz_range))
    resonance, phase = {}, {}
    for modality in SENSOR_MODALITIES:
        amplitude = SENSOR_SCALE[modality] * rng.uniform(*config.device_resonance_range, size=3)
        resonance[modality] = amplitude if config.device_effects else np.zeros(3)
        phase[modality] = rng.uniform(0.0, 2.0 * np.pi, size=3)
    return DeviceProfile(gain=gain, offset=offset, resonance_hz=resonance_hz, resonance=resonance, phase=phase)


def session_streams(
    config: SynthConfig, performer: int, user_index: int, session_id: int, task: Task, modality: ModalityId
) -> Tuple[np.random.Generator, np.random.Generator]:
    """Signal and noise generators of one recorded series."""
    key = (performer, user_index, session_id, _task_index(task), _modality_index(modality))
    return (
        streams.stream(config.rng_seed, streams.SESSION, *key),
        streams.stream(config.rng_seed, streams.NOISE, *key),
    )


def user_sensor_signal(
    config: SynthConfig, signature: UserSignature, modality: ModalityId, task: Task, rng: np.random.Generator
) -> np.ndarray:
    """Noise-free, device-free sensor signal of shape (samples_per_task, 3)."""
    n = config.samples_per_task
    sig = signature.sensors[modality]
    seconds = np.arange(n) * SAMPLE_PERIOD_MS / 1000.0
    signal = np.empty((n, 3))
    for axis in range(3):
        innovations = rng.standard_normal(n + BURN_IN)
        ar = lfilter([1.0], [1.0, -sig.a1[axis], -sig.a2[axis]], innovations)[BURN_IN:]
        ar = ar / max(float(np.std(ar)), 1e-12)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=2)
        sines = sum(
            sig.amplitudes[axis, j] * np.sin(2.0 * np.pi * sig.frequencies[axis, j] * seconds + phases[j])
            for j in range(2)
        )
        signal[:, axis] = ar + sines
    scale = SENSOR_SCALE[modality] * signature.task_scale[task]
    return SENSOR_BASELINE[modality] + scale * signal


def sensor_series(
    config: SynthConfig,
    signature: UserSignature,
    device: DeviceProfile,
    modality: ModalityId,
    task: Task,
    signal_rng: np.random.Generator,
    noise_rng: np.random.Generator,
) -> ChannelSeries:
    user = user_sensor_signal(config, signature, modality, task, signal_rng)
    tone = device.tone(modality, config.samples_per_task)
    observed = device.gain[modality] * (user + tone) + device.offset[modality]
    observed = observed + config.noise_std * noise_rng.standard_normal(observed.shape)
    t = np.arange(config.samples_per_task) * SAMPLE_PERIOD_MS
    return ChannelSeries(t=t, columns={"x": observed[:, 0], "y": observed[:, 1], "z": observed[:, 2]})


def _event_times(interval_ms: float, n: int, rng: np.random.Generator) -> np.ndarray:
    jitter = interval_ms * (1.0 + 0.25 * rng.uniform(-1.0, 1.0, size=n))
    return np.cumsum(jitter) - jitter[0] + rng.uniform(0.0, interval_ms)


def touch_series(config: SynthConfig, touch: TouchSignature, task: Task, rng: np.random.Generator) -> ChannelSeries:
    """Touch coordinates (text reading, swiping, tapping) or key presses (keystroke)."""
    width, height = DEFAULT_SCREEN
    if task is Task.KEYSTROKE:
        n = config.keystrokes_per_task
        intervals = rng.gamma(4.0, touch.key_interval_ms / 4.0, size=n)
        t = np.cumsum(intervals) - intervals[0]
        codes = rng.choice(KEY_CODES, size=n, p=touch.key_weights)
        return ChannelSeries(t=t, columns={"ascii": codes.astype(float)})

    n = config.touch_events_per_task
    t = _event_times(touch.interval_ms, n, rng)
    if task is Task.TAPPING:
        xy = touch.center + touch.spread * rng.standard_normal((n, 2))
    else:
        # strokes: the moving axis advances by stroke_speed per event, the other wobbles
        moving = 1 if task is Task.TEXT_READING else 0
        position = np.arange(n) % touch.stroke_length
        xy = np.tile(touch.center, (n, 1)) + 0.3 * touch.spread * rng.standard_normal((n, 2))
        direction = -1.0 if task is Task.TEXT_READING else 1.0
        xy[:, moving] += direction * touch.stroke_speed * (position - touch.stroke_length / 2.0)
    xy[:, 0] = np.clip(xy[:, 0], 0.0, width)
    xy[:, 1] = np.clip(xy[:, 1], 0.0, height)
    return ChannelSeries(t=t, columns={"x": xy[:, 0], "y": xy[:, 1]})


def _session(
    config: SynthConfig,
    user_index: int,
    session_id: int,
    performer: int,
    performer_id: str,
    signature: UserSignature,
    touch: TouchSignature,
    device_id: str,
    device: DeviceProfile,
) -> Session:
    tasks = {}
    for task in Task:
        channels = {}
        touch_rng = streams.stream(
            config.rng_seed, streams.TOUCH, performer, user_index, session_id, _task_index(task)
        )
        channels[TOUCH_CHANNEL] = touch_series(config, touch, task, touch_rng)
        for modality in SENSOR_MODALITIES:
            signal_rng, noise_rng = session_streams(config, performer, user_index, session_id, task, modality)
            channels[modality.value] = sensor_series(
                config, signature, device, modality, task, signal_rng, noise_rng
            )
        tasks[task.value] = channels
    return Session(session_id=session_id, device_id=device_id, performed_by=performer_id, tasks=tasks)


def user_id(index: int) -> str:
    return f"u{index + 1:03d}"


def device_id(index: int) -> str:
    return f"d{index + 1:03d}"


def impostor_id(index: int) -> str:
    return f"x{index + 1:03d}"


def generate_synthetic(config: SynthConfig) -> Dataset:
    """
    Generate a dataset as a pure function of ``config``.

    Owners record ``sessions_per_user`` sessions on their own device. Outside
    the training split every owner also gets two skilled-impostor sessions
    (numbered 3 and 4) performed by a dedicated impostor on the owner's device.

    Raises:
        ConfigurationError: if the configuration is invalid
    """
    try:
        config = SynthConfig.model_validate(config.model_dump())
    except ValidationError as error:
        raise ConfigurationError(f"invalid synthetic config: {error}") from error

    logger.info(
        f"Generating synthetic {config.split.value} split: {config.n_users} users, seed {config.rng_seed}"
    )
    users: List[UserRecord] = []
    for index in range(config.user_offset, config.user_offset + config.n_users):
        owner = user_signature(config, index)
        device = device_profile(config, index)
        sessions = [
            _session(config, index, s, OWNER, user_id(index), owner, owner.touch, device_id(index), device)
            for s in range(1, config.sessions_per_user + 1)
        ]
        if config.split is not Split.TRAIN:
            impostor = user_signature(config, index, impostor=True)
            imitated = impostor.touch.blend(owner.touch, config.impostor_imitation)
            sessions.extend(
                _session(config, index, s, IMPOSTOR, impostor_id(index), impostor, imitated, device_id(index), device)
                for s in (3, 4)
            )
        users.append(UserRecord(user_id=user_id(index), device_id=device_id(index), sessions=tuple(sessions)))
    return Dataset(split=config.split, users=tuple(users))
