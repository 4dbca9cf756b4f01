"""
Per-modality embedding network.

Input batch normalization, then stacked LSTM layers (tanh candidate and
output squashing, sigmoid gates), dropout between layers (a fresh mask per
step), variational recurrent dropout (one mask per sequence and layer), and
the last hidden state of the top layer as embedding, linearly projected when
the embedding size differs from the layer width.

Gate equations, with z = x W + (h_prev * r) U + b split into four blocks:

    i = sigmoid(z_i)   f = sigmoid(z_f)   g = tanh(z_g)   o = sigmoid(z_o)
    c = f * c_prev + i * g
    h = o * tanh(c)

Padded steps (t >= valid_len) leave h and c unchanged.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError
from scipy.special import expit

from behavepass.core import rng as streams
from behavepass.core.errors import CheckpointError, DimensionMismatchError, ForwardCacheError
from behavepass.core.features import Window, stack_windows
from behavepass.schemas.config import ModelSpec
from behavepass.schemas.dataset import ModalityId

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "behavepass-model/1"
GRAD_CHECK_LIMIT = 500
GRAD_CHECK_FLOOR = 1e-12

Gradients = Dict[str, np.ndarray]


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Trainable weights plus the input normalization running statistics."""

    spec: ModelSpec
    weights: Dict[str, np.ndarray]
    running_mean: np.ndarray
    running_var: np.ndarray

    @property
    def parameter_count(self) -> int:
        return int(sum(w.size for w in self.weights.values()))

    def with_weights(self, weights: Dict[str, np.ndarray]) -> "ModelParams":
        return ModelParams(self.spec, weights, self.running_mean, self.running_var)

    def with_running(self, mean: np.ndarray, var: np.ndarray) -> "ModelParams":
        return ModelParams(self.spec, self.weights, mean, var)

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.spec,
            {k: v.copy() for k, v in self.weights.items()},
            self.running_mean.copy(),
            self.running_var.copy(),
        )

    def to_bytes(self) -> bytes:
        chunks = [self.weights[k].tobytes() for k in sorted(self.weights)]
        return b"".join(chunks + [self.running_mean.tobytes(), self.running_var.tobytes()])


@dataclass(frozen=True)
class Embedding:
    values: np.ndarray
    modality: Optional[ModalityId] = None


@dataclass(frozen=True, eq=False)
class DropoutMasks:
    """Inverted-dropout masks for one forward pass."""

    recurrent: List[np.ndarray]  # per layer, (B, H)
    between: List[np.ndarray]  # per gap between layers, (B, M, H)


@dataclass(eq=False)
class ForwardCache:
    params: ModelParams
    step_mask: np.ndarray
    normalized: np.ndarray
    batch_mean: np.ndarray
    batch_var: np.ndarray
    layer_inputs: List[np.ndarray] = field(default_factory=list)
    layer_states: List[Dict[str, np.ndarray]] = field(default_factory=list)
    masks: Optional[DropoutMasks] = None
    last_hidden: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class TripletBatch:
    """Anchors, positives and negatives stacked as one (3B, M, dim) batch."""

    x: np.ndarray
    lengths: np.ndarray
    margin: float
    masks: Optional[DropoutMasks] = None

    @property
    def size(self) -> int:
        return self.x.shape[0] // 3


# ----------------------------------------------------------------------------
# initialization


def _orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def init_model(spec: ModelSpec, seed: int) -> ModelParams:
    """
    Glorot-uniform input weights, orthogonal recurrent blocks, forget-gate bias 1.

    Input weights of a layer are drawn from U(-sqrt(6 / (fan_in + fan_out)), +...)
    with fan_out = 4 * hidden_units.
    """
    rng = streams.stream(seed, streams.INIT)
    H = spec.hidden_units
    weights: Dict[str, np.ndarray] = {
        "bn_gamma": np.ones(spec.input_dim),
        "bn_beta": np.zeros(spec.input_dim),
    }
    for layer in range(spec.layers):
        fan_in = spec.input_dim if layer == 0 else H
        bound = np.sqrt(6.0 / (fan_in + 4 * H))
        weights[f"W{layer}"] = rng.uniform(-bound, bound, size=(fan_in, 4 * H))
        weights[f"U{layer}"] = np.concatenate([_orthogonal(H, rng) for _ in range(4)], axis=1)
        bias = np.zeros(4 * H)
        bias[H : 2 * H] = 1.0
        weights[f"b{layer}"] = bias
    if spec.projects:
        bound = np.sqrt(6.0 / (H + spec.embedding_dim))
        weights["P"] = rng.uniform(-bound, bound, size=(H, spec.embedding_dim))
        weights["p_b"] = np.zeros(spec.embedding_dim)
    return ModelParams(spec, weights, np.zeros(spec.input_dim), np.ones(spec.input_dim))


def sample_masks(spec: ModelSpec, batch: int, steps: int, rng: np.random.Generator) -> DropoutMasks:
    H = spec.hidden_units

    def draw(rate: float, shape: Tuple[int, ...]) -> np.ndarray:
        if rate <= 0.0:
            return np.ones(shape)
        return (rng.random(shape) >= rate) / (1.0 - rate)

    recurrent = [draw(spec.recurrent_dropout_rate, (batch, H)) for _ in range(spec.layers)]
    between = [draw(spec.dropout_rate, (batch, steps, H)) for _ in range(spec.layers - 1)]
    return DropoutMasks(recurrent=recurrent, between=between)


# ----------------------------------------------------------------------------
# forward


def _run_layer(
    x_seq: np.ndarray, W: np.ndarray, U: np.ndarray, b: np.ndarray, rmask: Optional[np.ndarray], step_mask: np.ndarray
) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    B, M, _ = x_seq.shape
    H = U.shape[0]
    projected = x_seq @ W + b
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    out = np.zeros((B, M, H))
    keep = {name: np.zeros((B, M, H)) for name in ("h_drop", "c_prev", "i", "f", "g", "o", "tanh_c")}
    for t in range(M):
        h_drop = h if rmask is None else h * rmask
        z = projected[:, t] + h_drop @ U
        i = expit(z[:, :H])
        f = expit(z[:, H : 2 * H])
        g = np.tanh(z[:, 2 * H : 3 * H])
        o = expit(z[:, 3 * H :])
        c_new = f * c + i * g
        tanh_c = np.tanh(c_new)
        h_new = o * tanh_c
        m = step_mask[:, t : t + 1]
        for name, value in (("h_drop", h_drop), ("c_prev", c), ("i", i), ("f", f), ("g", g), ("o", o), ("tanh_c", tanh_c)):
            keep[name][:, t] = value
        c = m * c_new + (1.0 - m) * c
        h = m * h_new + (1.0 - m) * h
        out[:, t] = h
    return out, keep


def forward(
    params: ModelParams,
    x: np.ndarray,
    lengths: np.ndarray,
    training: bool = False,
    masks: Optional[DropoutMasks] = None,
) -> Tuple[np.ndarray, ForwardCache]:
    """
    Embed a batch of windows.

    Args:
        x: (B, M, input_dim) window tensor
        lengths: (B,) count of valid rows per window
        training: use batch statistics for the input normalization and apply
            ``masks``; inference uses the running statistics and no dropout
        masks: dropout masks (training only); None means no dropout

    Returns:
        (B, E) embeddings and the cache needed by ``backward``
    """
    spec = params.spec
    if x.ndim != 3 or x.shape[2] != spec.input_dim:
        raise DimensionMismatchError(f"expected windows of dim {spec.input_dim}, got shape {x.shape}")
    B, M, _ = x.shape
    step_mask = (np.arange(M)[None, :] < np.asarray(lengths)[:, None]).astype(np.float64)

    if training:
        valid = x[step_mask > 0]
        mean = valid.mean(axis=0)
        var = valid.var(axis=0)
    else:
        mean, var = params.running_mean, params.running_var
        masks = None
    normalized = (x - mean) / np.sqrt(var + spec.bn_epsilon)
    layer_in = params.weights["bn_gamma"] * normalized + params.weights["bn_beta"]

    cache = ForwardCache(params, step_mask, normalized, mean, var, masks=masks)
    for layer in range(spec.layers):
        rmask = masks.recurrent[layer] if masks is not None else None
        out, keep = _run_layer(
            layer_in, params.weights[f"W{layer}"], params.weights[f"U{layer}"], params.weights[f"b{layer}"], rmask, step_mask
        )
        cache.layer_inputs.append(layer_in)
        cache.layer_states.append(keep)
        if layer < spec.layers - 1:
            layer_in = out * masks.between[layer] if masks is not None else out
        else:
            cache.last_hidden = out[:, -1]

    embedding = cache.last_hidden
    if spec.projects:
        embedding = embedding @ params.weights["P"] + params.weights["p_b"]
    return embedding, cache


# ----------------------------------------------------------------------------
# backward


def _layer_backward(
    d_out: np.ndarray, x_seq: np.ndarray, keep: Dict[str, np.ndarray], W: np.ndarray, U: np.ndarray,
    rmask: Optional[np.ndarray], step_mask: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    B, M, H = d_out.shape
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(W.shape[1])
    dx = np.zeros_like(x_seq)
    dh_carry = np.zeros((B, H))
    dc_carry = np.zeros((B, H))
    for t in reversed(range(M)):
        m = step_mask[:, t : t + 1]
        i, f, g, o = keep["i"][:, t], keep["f"][:, t], keep["g"][:, t], keep["o"][:, t]
        tanh_c = keep["tanh_c"][:, t]
        dh = d_out[:, t] + dh_carry
        dh_new = m * dh
        dc_new = m * dc_carry + dh_new * o * (1.0 - tanh_c**2)
        dh_prev = (1.0 - m) * dh
        dc_prev = (1.0 - m) * dc_carry + dc_new * f
        dz = np.concatenate(
            [
                dc_new * g * i * (1.0 - i),
                dc_new * keep["c_prev"][:, t] * f * (1.0 - f),
                dc_new * i * (1.0 - g**2),
                dh_new * tanh_c * o * (1.0 - o),
            ],
            axis=1,
        )
        dW += x_seq[:, t].T @ dz
        dU += keep["h_drop"][:, t].T @ dz
        db += dz.sum(axis=0)
        dx[:, t] = dz @ W.T
        d_hdrop = dz @ U.T
        dh_prev = dh_prev + (d_hdrop if rmask is None else d_hdrop * rmask)
        dh_carry, dc_carry = dh_prev, dc_prev
    return dx, dW, dU, db


def backward(params: ModelParams, cache: ForwardCache, d_embedding: np.ndarray) -> Gradients:
    """
    Backpropagation through time of d(loss)/d(embedding) to every weight.

    Raises:
        ForwardCacheError: if ``cache`` was produced with different parameters
            or is incomplete
    """
    if cache is None or cache.params is not params or cache.last_hidden is None:
        raise ForwardCacheError("backward needs the cache of a forward pass over the same parameters")
    spec = params.spec
    grads: Gradients = {}
    d_hidden = d_embedding
    if spec.projects:
        grads["P"] = cache.last_hidden.T @ d_embedding
        grads["p_b"] = d_embedding.sum(axis=0)
        d_hidden = d_embedding @ params.weights["P"].T

    B, M, H = cache.layer_inputs[-1].shape[0], cache.step_mask.shape[1], spec.hidden_units
    d_out = np.zeros((B, M, H))
    d_out[:, -1] = d_hidden
    masks = cache.masks
    for layer in reversed(range(spec.layers)):
        rmask = masks.recurrent[layer] if masks is not None else None
        dx, dW, dU, db = _layer_backward(
            d_out,
            cache.layer_inputs[layer],
            cache.layer_states[layer],
            params.weights[f"W{layer}"],
            params.weights[f"U{layer}"],
            rmask,
            cache.step_mask,
        )
        grads[f"W{layer}"], grads[f"U{layer}"], grads[f"b{layer}"] = dW, dU, db
        if layer > 0:
            d_out = dx * masks.between[layer - 1] if masks is not None else dx
        else:
            grads["bn_gamma"] = (dx * cache.normalized).sum(axis=(0, 1))
            grads["bn_beta"] = dx.sum(axis=(0, 1))
    return {name: grads[name] for name in params.weights}


# ----------------------------------------------------------------------------
# triplet objective


def triplet_objective(embeddings: np.ndarray, margin: float) -> Tuple[float, np.ndarray, float]:
    """
    Mean hinge loss of a stacked [anchors; positives; negatives] embedding batch.

    Returns:
        loss, d(loss)/d(embeddings), fraction of triplets with an active hinge
    """
    B = embeddings.shape[0] // 3
    a, p, n = embeddings[:B], embeddings[B : 2 * B], embeddings[2 * B :]
    hinge = np.sum((a - p) ** 2, axis=1) - np.sum((a - n) ** 2, axis=1) + margin
    active = (hinge > 0).astype(np.float64)[:, None]
    loss = float(np.mean(np.maximum(hinge, 0.0)))
    scale = active * (2.0 / B)
    d_emb = np.concatenate([scale * (n - p), -scale * (a - p), scale * (a - n)])
    return loss, d_emb, float(active.mean())


def triplet_gradients(params: ModelParams, batch: TripletBatch) -> Tuple[float, Gradients, float, ForwardCache]:
    """Loss, gradients, active fraction and forward cache for one triplet batch."""
    embeddings, cache = forward(params, batch.x, batch.lengths, training=True, masks=batch.masks)
    loss, d_emb, active = triplet_objective(embeddings, batch.margin)
    return loss, backward(params, cache, d_emb), active, cache


def batch_loss(params: ModelParams, batch: TripletBatch) -> float:
    embeddings, _ = forward(params, batch.x, batch.lengths, training=True, masks=batch.masks)
    return triplet_objective(embeddings, batch.margin)[0]


def grad_check(params: ModelParams, batch: TripletBatch, fd_step: float = 1e-5) -> float:
    """
    Largest relative disagreement between analytic and central-difference gradients.

    The relative error of one entry is |g_a - g_fd| / max(floor, |g_a| + |g_fd|)
    with floor 1e-12, so entries that are exactly zero on both sides agree.
    Dropout masks are taken from ``batch`` so every loss evaluation sees the same
    network.
    """
    if fd_step <= 0:
        raise ValueError(f"fd_step must be positive, got {fd_step}")
    if params.parameter_count > GRAD_CHECK_LIMIT:
        raise ValueError(
            f"gradient check is meant for miniature models (<= {GRAD_CHECK_LIMIT} weights), "
            f"got {params.parameter_count}"
        )
    _, analytic, _, _ = triplet_gradients(params, batch)
    worst = 0.0
    for name, tensor in params.weights.items():
        for index in np.ndindex(tensor.shape):
            perturbed = {k: v.copy() for k, v in params.weights.items()}
            perturbed[name][index] = tensor[index] + fd_step
            upper = batch_loss(params.with_weights(perturbed), batch)
            perturbed[name][index] = tensor[index] - fd_step
            lower = batch_loss(params.with_weights(perturbed), batch)
            numeric = (upper - lower) / (2.0 * fd_step)
            exact = analytic[name][index]
            error = abs(exact - numeric) / max(GRAD_CHECK_FLOOR, abs(exact) + abs(numeric))
            worst = max(worst, error)
    return worst


# ----------------------------------------------------------------------------
# inference


def embed(params: ModelParams, window: Window, rng: Optional[np.random.Generator] = None) -> Embedding:
    """
    Embed one window; inference mode unless a generator for dropout is given.

    Raises:
        DimensionMismatchError: if the window dim differs from the model input dim
    """
    if window.data.shape[1] != params.spec.input_dim:
        raise DimensionMismatchError(
            f"window dim {window.data.shape[1]} does not match model input dim {params.spec.input_dim}"
        )
    x = window.data[None]
    lengths = np.array([window.valid_len])
    if rng is None:
        values, _ = forward(params, x, lengths)
    else:
        masks = sample_masks(params.spec, 1, window.length, rng)
        values, _ = forward(params, x, lengths, training=True, masks=masks)
    return Embedding(values=values[0])


def embed_windows(params: ModelParams, windows: Sequence[Window], chunk: int = 256) -> np.ndarray:
    """Inference embeddings of equally shaped windows, shape (len(windows), E)."""
    if not windows:
        return np.zeros((0, params.spec.embedding_dim))
    out = []
    for start in range(0, len(windows), chunk):
        x, lengths = stack_windows(windows[start : start + chunk])
        if x.shape[2] != params.spec.input_dim:
            raise DimensionMismatchError(f"window dim {x.shape[2]} does not match model input dim {params.spec.input_dim}")
        values, _ = forward(params, x, lengths)
        out.append(values)
    return np.concatenate(out)


# ----------------------------------------------------------------------------
# checkpoints


def save_checkpoint(params: ModelParams, path: Union[str, Path], modality: Optional[ModalityId] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "modality": modality.value if modality else None,
        "spec": params.spec.model_dump(),
        "weights": {name: {"shape": list(w.shape), "data": w.ravel().tolist()} for name, w in params.weights.items()},
        "running_mean": params.running_mean.tolist(),
        "running_var": params.running_var.tolist(),
    }
    path.write_text(json.dumps(payload, separators=(",", ":")), encoding="utf-8")
    return path


def load_checkpoint(path: Union[str, Path], expected: Optional[ModelSpec] = None) -> ModelParams:
    """
    Load a checkpoint written by ``save_checkpoint``.

    Raises:
        CheckpointError: unreadable file, unknown format or a spec that differs
            from ``expected``
    """
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as error:
        raise CheckpointError(f"cannot read checkpoint {path}: {error}") from error
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: unsupported checkpoint format {payload.get('format')!r}")
    try:
        spec = ModelSpec.model_validate(payload["spec"])
    except (KeyError, ValidationError) as error:
        raise CheckpointError(f"{path}: invalid spec header: {error}") from error
    if expected is not None and spec != expected:
        raise CheckpointError(f"{path}: checkpoint spec {spec.model_dump()} does not match {expected.model_dump()}")
    weights = {
        name: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in payload["weights"].items()
    }
    reference = init_model(spec, 0)
    for name, tensor in reference.weights.items():
        if name not in weights or weights[name].shape != tensor.shape:
            raise CheckpointError(f"{path}: tensor {name} missing or misshapen")
    return ModelParams(
        spec, weights, np.array(payload["running_mean"], dtype=np.float64), np.array(payload["running_var"], dtype=np.float64)
    )
