"""
Triplet training of the per-modality embedding networks.

Each epoch draws a fresh pool of windows at random start instants from every
(user, session) of the training split, pairs them into anchor / positive /
negative triplets and runs Adam over mini-batches of the mean hinge loss

    max(0, d2(a, p) - d2(a, n) + margin)
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from behavepass.core import rng as streams
from behavepass.core.errors import (
    DimensionMismatchError,
    FeatureError,
    InsufficientDataError,
    ProtocolError,
    TrainingDivergedError,
)
from behavepass.core.features import (
    WINDOW_POLICY,
    FeatureSequence,
    Window,
    WindowOrigin,
    extract,
    forward_difference,
    random_windows,
)
from behavepass.core.net import (
    Embedding,
    Gradients,
    ModelParams,
    TripletBatch,
    init_model,
    sample_masks,
    triplet_gradients,
)
from behavepass.schemas.config import Hyper, ModelSpec
from behavepass.schemas.dataset import Dataset, ModalityId, Split, Task

logger = logging.getLogger(__name__)

# user -> session -> windows
WindowPool = Dict[str, Dict[int, List[Window]]]
Miner = Callable[[List["Triplet"], WindowPool, np.random.Generator], List["Triplet"]]

SENSOR_DIM = 12


@dataclass(frozen=True, eq=False)
class Triplet:
    anchor: Window
    positive: Window
    negative: Window
    user: str
    anchor_session: int
    positive_session: int
    negative_user: str


@dataclass(frozen=True, eq=False)
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def fresh(cls, params: ModelParams) -> "AdamState":
        return cls(
            m={k: np.zeros_like(w) for k, w in params.weights.items()},
            v={k: np.zeros_like(w) for k, w in params.weights.items()},
        )


@dataclass
class TrainingResult:
    modality: ModalityId
    params: ModelParams
    losses: List[float] = field(default_factory=list)
    active_fractions: List[float] = field(default_factory=list)

    def log_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "epoch": np.arange(1, len(self.losses) + 1),
                "loss": self.losses,
                "active_triplet_fraction": self.active_fractions,
            }
        )

    def write_log(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.log_frame().to_csv(path, index=False, float_format="%.10g")
        return path


# ----------------------------------------------------------------------------
# loss and optimizer


def _values(v: Union[Embedding, np.ndarray]) -> np.ndarray:
    return np.asarray(v.values if isinstance(v, Embedding) else v, dtype=np.float64)


def triplet_loss(
    anchor: Union[Embedding, np.ndarray],
    positive: Union[Embedding, np.ndarray],
    negative: Union[Embedding, np.ndarray],
    margin: float,
) -> float:
    """Hinge on squared Euclidean distances: max(0, d2(a, p) - d2(a, n) + margin)."""
    a, p, n = _values(anchor), _values(positive), _values(negative)
    if not a.shape == p.shape == n.shape:
        raise DimensionMismatchError(f"embedding shapes differ: {a.shape}, {p.shape}, {n.shape}")
    return float(max(0.0, np.sum((a - p) ** 2) - np.sum((a - n) ** 2) + margin))


def adam_step(
    params: ModelParams, grads: Gradients, state: AdamState, hyper: Hyper
) -> Tuple[ModelParams, AdamState]:
    """
    One bias-corrected Adam update.

    Raises:
        TrainingDivergedError: if any gradient is NaN or infinite
        DimensionMismatchError: if gradient and parameter shapes disagree
    """
    t = state.t + 1
    bc1 = 1.0 - hyper.beta1**t
    bc2 = 1.0 - hyper.beta2**t
    weights, m, v = {}, {}, {}
    for name, theta in params.weights.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise DimensionMismatchError(f"gradient of {name} has shape {g.shape}, parameter {theta.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError(f"non-finite gradient for {name} at step {t}")
        m[name] = hyper.beta1 * state.m[name] + (1.0 - hyper.beta1) * g
        v[name] = hyper.beta2 * state.v[name] + (1.0 - hyper.beta2) * (g * g)
        weights[name] = theta - hyper.learning_rate * (m[name] / bc1) / (np.sqrt(v[name] / bc2) + hyper.epsilon)
    return params.with_weights(weights), AdamState(m=m, v=v, t=t)


# ----------------------------------------------------------------------------
# triplets


def sample_triplets(
    pool: WindowPool, count: int, rng: np.random.Generator, miner: Optional[Miner] = None
) -> List[Triplet]:
    """
    Draw ``count`` triplets uniformly.

    The anchor user is uniform over users with at least two non-empty
    sessions, the (anchor, positive) session pair uniform over ordered pairs of
    distinct sessions, the negative user uniform over every other user, and
    each window uniform within its session. ``miner`` may rewrite the list
    (for instance swap in harder negatives).

    Raises:
        InsufficientDataError: fewer than two users, or no user with two sessions
    """
    sessions = {
        user: [s for s in sorted(pool[user]) if pool[user][s]] for user in sorted(pool)
    }
    users = [u for u, s in sessions.items() if s]
    anchors = [u for u in users if len(sessions[u]) >= 2]
    if len(users) < 2 or not anchors:
        raise InsufficientDataError(
            f"triplets need two users and one user with two sessions; got {len(users)} users, "
            f"{len(anchors)} with two sessions"
        )

    def pick(user: str, session: int) -> Window:
        windows = pool[user][session]
        return windows[int(rng.integers(len(windows)))]

    triplets = []
    for _ in range(count):
        user = anchors[int(rng.integers(len(anchors)))]
        first, second = rng.choice(len(sessions[user]), size=2, replace=False)
        s_a, s_p = sessions[user][int(first)], sessions[user][int(second)]
        others = [u for u in users if u != user]
        negative = others[int(rng.integers(len(others)))]
        s_n = sessions[negative][int(rng.integers(len(sessions[negative])))]
        triplets.append(Triplet(pick(user, s_a), pick(user, s_p), pick(negative, s_n), user, s_a, s_p, negative))
    if miner is not None:
        triplets = miner(triplets, pool, rng)
    return triplets


# ----------------------------------------------------------------------------
# window pools


def collect_sequences(dataset: Dataset, modality: ModalityId) -> Dict[str, Dict[int, Dict[Task, FeatureSequence]]]:
    """Feature sequences of the owners' own sessions, by user, session and task."""
    tasks = list(Task) if modality.is_sensor else [modality.task]
    out: Dict[str, Dict[int, Dict[Task, FeatureSequence]]] = {}
    for user in dataset.users:
        for session in user.genuine_sessions:
            for task in tasks:
                fs = extract(session, task, modality)
                if fs is not None:
                    out.setdefault(user.user_id, {}).setdefault(session.session_id, {})[task] = fs
    return out


def build_window_pool(
    sequences: Dict[str, Dict[int, Dict[Task, FeatureSequence]]],
    modality: ModalityId,
    windows_per_session: int,
    rng: np.random.Generator,
) -> WindowPool:
    """
    One epoch of training windows at random start instants.

    Sensor sessions spread their windows evenly over the tasks; the remainder
    of the division rotates over the tasks across sessions, so the pooled task
    histogram is flat to within one window.
    """
    M, _ = WINDOW_POLICY[modality]
    pool: WindowPool = {}
    rotation = 0
    for user in sorted(sequences):
        for session in sorted(sequences[user]):
            by_task = sequences[user][session]
            tasks = [t for t in Task if t in by_task]
            base, extra = divmod(windows_per_session, len(tasks))
            counts = {t: base for t in tasks}
            for _ in range(extra):
                counts[tasks[rotation % len(tasks)]] += 1
                rotation += 1
            windows: List[Window] = []
            for task in tasks:
                origin = WindowOrigin(user, session, task.value, 0, user)
                windows.extend(random_windows(by_task[task], M, counts[task], rng, origin))
            pool.setdefault(user, {})[session] = windows
    return pool


def pool_task_histogram(pool: WindowPool) -> Dict[str, int]:
    histogram: Dict[str, int] = {}
    for sessions in pool.values():
        for windows in sessions.values():
            for window in windows:
                task = window.origin.task if window.origin else ""
                histogram[task] = histogram.get(task, 0) + 1
    return histogram


def augment_device_noise(
    window: Window, rng: np.random.Generator, gain_range: Tuple[float, float] = (0.98, 1.02), offset_std: float = 0.05
) -> Window:
    """
    Simulate a different device on a sensor window.

    The raw axis columns get one gain per window and one Gaussian offset per
    axis. Derivative columns follow the transformed axes exactly (the offset
    cancels), FFT magnitudes scale with the gain.

    Raises:
        FeatureError: for non-sensor windows
    """
    if window.data.shape[1] != SENSOR_DIM:
        raise FeatureError(f"device-noise augmentation applies to sensor windows only, got dim {window.data.shape[1]}")
    gain = float(rng.uniform(*gain_range))
    offset = rng.normal(0.0, offset_std, size=3) if offset_std > 0 else np.zeros(3)
    data = window.data.copy()
    valid = window.valid_len
    data[:valid, 0:3] = gain * data[:valid, 0:3] + offset
    data[:valid, 3:12] = gain * data[:valid, 3:12]
    return Window(data=data, valid_len=valid, origin=window.origin)


def recompute_derivatives(window: Window) -> np.ndarray:
    """First and second forward differences of a sensor window's axis columns, valid rows only."""
    axes = window.data[: window.valid_len, 0:3]
    first = np.column_stack([forward_difference(axes[:, k]) for k in range(3)])
    second = np.column_stack([forward_difference(first[:, k]) for k in range(3)])
    return np.hstack([first, second])


# ----------------------------------------------------------------------------
# training loop


def _stack(triplets: Sequence[Triplet]) -> Tuple[np.ndarray, np.ndarray]:
    windows = [t.anchor for t in triplets] + [t.positive for t in triplets] + [t.negative for t in triplets]
    return np.stack([w.data for w in windows]), np.array([w.valid_len for w in windows], dtype=int)


def train_modality(
    dataset: Dataset,
    modality: ModalityId,
    hyper: Hyper,
    spec: ModelSpec,
    seed: int,
    miner: Optional[Miner] = None,
) -> TrainingResult:
    """
    Train the embedding network of one modality.

    Each epoch uses ``batch_size * ceil(pool / batch_size)`` triplets, so every
    epoch sees at least as many triplets as pooled windows.

    Raises:
        ProtocolError: when not given the train split
        InsufficientDataError: fewer than two users hold the modality
        TrainingDivergedError: loss or gradients become non-finite
    """
    if dataset.split is not Split.TRAIN:
        raise ProtocolError(f"models are trained on the train split only, got {dataset.split.value}")
    if spec.input_dim != modality.feature_dim:
        raise DimensionMismatchError(f"{modality.value} features have dim {modality.feature_dim}, spec {spec.input_dim}")

    sequences = collect_sequences(dataset, modality)
    if len(sequences) < 2:
        raise InsufficientDataError(f"{modality.value}: need data for two users, found {len(sequences)}")

    M, _ = WINDOW_POLICY[modality]
    index = list(ModalityId).index(modality)
    rng = streams.stream(seed, streams.TRAINING, index)
    params = init_model(spec, seed)
    state = AdamState.fresh(params)
    result = TrainingResult(modality=modality, params=params)
    augment = hyper.augment and modality.is_sensor

    logger.info(f"Training {modality.value}: {len(sequences)} users, {hyper.epochs} epochs, batch {hyper.batch_size}")
    for epoch in range(1, hyper.epochs + 1):
        pool = build_window_pool(sequences, modality, hyper.windows_per_session, rng)
        total = sum(len(w) for sessions in pool.values() for w in sessions.values())
        count = hyper.batch_size * math.ceil(total / hyper.batch_size)
        triplets = sample_triplets(pool, count, rng, miner)

        losses, actives = [], []
        for start in range(0, len(triplets), hyper.batch_size):
            chunk = triplets[start : start + hyper.batch_size]
            if augment:
                chunk = [
                    Triplet(
                        *(augment_device_noise(w, rng, hyper.augment_gain_range, hyper.augment_offset_std)
                          for w in (t.anchor, t.positive, t.negative)),
                        t.user, t.anchor_session, t.positive_session, t.negative_user,
                    )
                    for t in chunk
                ]
            x, lengths = _stack(chunk)
            masks = sample_masks(spec, x.shape[0], M, rng)
            loss, grads, active, cache = triplet_gradients(
                params, TripletBatch(x=x, lengths=lengths, margin=hyper.margin, masks=masks)
            )
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"{modality.value}: loss became {loss} in epoch {epoch}")
            params, state = adam_step(params, grads, state, hyper)
            momentum = spec.bn_momentum
            params = params.with_running(
                (1.0 - momentum) * params.running_mean + momentum * cache.batch_mean,
                (1.0 - momentum) * params.running_var + momentum * cache.batch_var,
            )
            losses.append(loss)
            actives.append(active)

        result.losses.append(float(np.mean(losses)))
        result.active_fractions.append(float(np.mean(actives)))
        logger.info(
            f"{modality.value} epoch {epoch}: loss={result.losses[-1]:.6f} "
            f"active_triplet_fraction={result.active_fractions[-1]:.4f}"
        )

    result.params = params
    return result
