import numpy as np
import pytest

from behavepass.core.synthetic import generate_synthetic
from behavepass.schemas.config import ModelSpec, SynthConfig
from behavepass.schemas.dataset import (
    SENSOR_MODALITIES,
    TOUCH_CHANNEL,
    ChannelSeries,
    Dataset,
    Session,
    Split,
    Task,
    UserRecord,
)


def sensor_series(n=40, seed=0, t=None):
    rng = np.random.default_rng(seed)
    t = np.arange(n) * 5.0 if t is None else np.asarray(t, dtype=float)
    return ChannelSeries(t=t, columns={"x": rng.normal(size=len(t)), "y": rng.normal(size=len(t)), "z": rng.normal(size=len(t))})


def touch_series(task, n=30, seed=0):
    rng = np.random.default_rng(seed)
    t = np.cumsum(rng.uniform(50.0, 150.0, size=n))
    if task is Task.KEYSTROKE:
        return ChannelSeries(t=t, columns={"ascii": rng.integers(97, 123, size=n).astype(float)})
    return ChannelSeries(t=t, columns={"x": rng.uniform(0, 1080, size=n), "y": rng.uniform(0, 2340, size=n)})


def make_session(session_id, device, performed_by, seed=0, drop=()):
    """Session holding every task with touch plus all five sensors, minus the channels named in ``drop``."""
    tasks = {}
    for k, task in enumerate(Task):
        channels = {TOUCH_CHANNEL: touch_series(task, seed=seed + k)}
        for j, modality in enumerate(SENSOR_MODALITIES):
            channels[modality.value] = sensor_series(seed=seed + 10 * k + j)
        tasks[task.value] = {key: value for key, value in channels.items() if (task.value, key) not in drop}
    return Session(session_id=session_id, device_id=device, performed_by=performed_by, tasks=tasks)


def make_user(index, with_impostors=True):
    user, device = f"u{index:03d}", f"d{index:03d}"
    sessions = [make_session(s, device, user, seed=100 * index + s) for s in (1, 2, 3, 4)]
    if with_impostors:
        sessions += [make_session(s, device, f"x{index:03d}", seed=100 * index + 50 + s) for s in (3, 4)]
    return UserRecord(user_id=user, device_id=device, sessions=tuple(sessions))


@pytest.fixture
def handmade_dataset():
    return Dataset(split=Split.EVALUATION, users=(make_user(1), make_user(2)))


@pytest.fixture(scope="session")
def tiny_synth_config():
    return SynthConfig(
        split=Split.EVALUATION,
        n_users=3,
        samples_per_task=200,
        touch_events_per_task=60,
        keystrokes_per_task=60,
        rng_seed=7,
    )


@pytest.fixture(scope="session")
def tiny_eval_dataset(tiny_synth_config):
    return generate_synthetic(tiny_synth_config)


@pytest.fixture(scope="session")
def tiny_train_dataset(tiny_synth_config):
    return generate_synthetic(tiny_synth_config.model_copy(update={"split": Split.TRAIN, "user_offset": 10}))


@pytest.fixture
def mini_spec():
    def build(input_dim, hidden_units=4, embedding_dim=3, dropout=0.0):
        return ModelSpec(
            input_dim=input_dim,
            hidden_units=hidden_units,
            embedding_dim=embedding_dim,
            dropout_rate=dropout,
            recurrent_dropout_rate=dropout,
        )

    return build
