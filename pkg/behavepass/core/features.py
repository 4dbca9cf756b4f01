"""
Preprocessing chain: per-session normalization, derivative and FFT feature
vectors, and fixed-length windowing.

Feature layouts per timestamp:

    sensors    [x, y, z, x', y', z', x'', y'', z'', fft(x), fft(y), fft(z)]
    touch      [x, y, x', y', x'', y'', fft(x), fft(y)]
    keystroke  [inter-press time (s), ascii / 127]
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from behavepass.core.errors import EmptyInputError, FeatureError
from behavepass.schemas.dataset import DEFAULT_SCREEN, ChannelSeries, ModalityId, Session, Task

logger = logging.getLogger(__name__)

STD_GUARD = 1e-9
FFT_BLOCK = 4096
DEFAULT_CAP = 50

# (window length M, stride between window starts)
WINDOW_POLICY: Dict[ModalityId, Tuple[int, int]] = {
    ModalityId.KEYSTROKE: (50, 20),
    ModalityId.TEXT_READING: (100, 10),
    ModalityId.GALLERY_SWIPING: (100, 10),
    ModalityId.TAPPING: (20, 10),
    ModalityId.ACCELEROMETER: (150, 50),
    ModalityId.GRAVITY: (150, 50),
    ModalityId.GYROSCOPE: (150, 50),
    ModalityId.LINEAR_ACCELEROMETER: (150, 50),
    ModalityId.MAGNETOMETER: (150, 50),
}

FEATURE_COLUMNS: Dict[str, Tuple[str, ...]] = {
    "sensor": ("x", "y", "z", "dx", "dy", "dz", "ddx", "ddy", "ddz", "fftx", "ffty", "fftz"),
    "touch": ("x", "y", "dx", "dy", "ddx", "ddy", "fftx", "ffty"),
    "keystroke": ("inter_press", "ascii"),
}


def _layout(modality: ModalityId) -> str:
    if modality.is_sensor:
        return "sensor"
    return "keystroke" if modality is ModalityId.KEYSTROKE else "touch"


@dataclass(frozen=True)
class WindowOrigin:
    user: str
    session: int
    task: str
    start: int
    performed_by: str = ""


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    modality: ModalityId
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.vectors, columns=list(FEATURE_COLUMNS[_layout(self.modality)]))

    def dump_csv(self, path: Union[str, Path]) -> Path:
        """Debug dump: one row per timestamp, named feature columns."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.10g")
        return path


@dataclass(frozen=True, eq=False)
class Window:
    """M x dim slice of a feature sequence; rows from valid_len on are zero padding."""

    data: np.ndarray
    valid_len: int
    origin: Optional[WindowOrigin] = None

    @property
    def length(self) -> int:
        return self.data.shape[0]


# ----------------------------------------------------------------------------
# normalization


def _infer_modality_kind(series: ChannelSeries) -> str:
    if "ascii" in series.columns:
        return "keystroke"
    return "sensor" if "z" in series.columns else "touch"


def zscore(values: np.ndarray) -> np.ndarray:
    """Population z-score; a (near-)constant axis maps to zeros."""
    std = float(np.std(values))
    if std < STD_GUARD:
        return np.zeros_like(values, dtype=np.float64)
    return (values - np.mean(values)) / std


def normalize_session(
    series: ChannelSeries, modality: Optional[ModalityId] = None, screen: Tuple[int, int] = DEFAULT_SCREEN
) -> ChannelSeries:
    """
    Normalize one session's series.

    Sensor axes are z-scored per axis, touch coordinates are divided by the
    screen width / height, keystroke series pass through unchanged.

    Raises:
        EmptyInputError: if the series has no samples
    """
    if len(series) == 0:
        raise EmptyInputError("cannot normalize an empty series")
    kind = _layout(modality) if modality is not None else _infer_modality_kind(series)
    if kind == "sensor":
        return series.replace(**{axis: zscore(series[axis]) for axis in ("x", "y", "z")})
    if kind == "touch":
        width, height = screen
        return series.replace(x=series["x"] / float(width), y=series["y"] / float(height))
    return series


# ----------------------------------------------------------------------------
# feature vectors


def forward_difference(values: np.ndarray) -> np.ndarray:
    """Forward difference with the last value repeated, so the length is kept."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) < 2:
        return np.zeros_like(values)
    diff = np.diff(values)
    return np.append(diff, diff[-1])


def fft_magnitude(values: np.ndarray, block: int = FFT_BLOCK) -> np.ndarray:
    """Unnormalized DFT magnitude; row k holds bin k of its block of ``block`` samples."""
    values = np.asarray(values, dtype=np.float64)
    chunks = [np.abs(np.fft.fft(values[i : i + block])) for i in range(0, len(values), block)]
    return np.concatenate(chunks) if chunks else np.zeros(0)


def _require(series: ChannelSeries, modality: ModalityId, names: Sequence[str]) -> None:
    missing = [name for name in names if name not in series.columns]
    if missing:
        raise FeatureError(f"{modality.value} series lacks column(s) {missing}, has {list(series.columns)}")


def derive_features(
    series: ChannelSeries, modality: ModalityId, raw: Optional[ChannelSeries] = None
) -> FeatureSequence:
    """
    Build the per-timestamp feature vectors of a normalized series.

    Args:
        series: normalized series
        modality: modality the series belongs to
        raw: un-normalized series the FFT columns are computed from; when
            omitted the FFT is taken of ``series`` itself

    Raises:
        FeatureError: on a column mismatch or non-finite output
    """
    raw = series if raw is None else raw
    if modality is ModalityId.KEYSTROKE:
        _require(series, modality, ("ascii",))
        inter_press = np.zeros(len(series))
        inter_press[1:] = np.diff(series.t) / 1000.0
        vectors = np.column_stack([inter_press, series["ascii"] / 127.0])
    else:
        axes = modality.raw_columns
        _require(series, modality, axes)
        _require(raw, modality, axes)
        if len(raw) != len(series):
            raise FeatureError(f"raw series has {len(raw)} samples, normalized series {len(series)}")
        values = [series[a] for a in axes]
        first = [forward_difference(v) for v in values]
        second = [forward_difference(d) for d in first]
        spectra = [fft_magnitude(raw[a]) for a in axes]
        vectors = np.column_stack(values + first + second + spectra)

    vectors = vectors.reshape(len(series), modality.feature_dim)
    if not np.all(np.isfinite(vectors)):
        raise FeatureError(f"non-finite feature values in {modality.value} sequence")
    return FeatureSequence(modality=modality, vectors=vectors)


def extract(session: Session, task: Task, modality: ModalityId) -> Optional[FeatureSequence]:
    """Feature sequence of ``modality`` recorded during ``task``; None when absent or empty."""
    series = session.series(task, modality)
    if series is None or len(series) == 0:
        return None
    normalized = normalize_session(series, modality, session.screen)
    return derive_features(normalized, modality, raw=series if modality.is_sensor else None)


# ----------------------------------------------------------------------------
# windows


def _slice(vectors: np.ndarray, start: int, M: int) -> Tuple[np.ndarray, int]:
    chunk = vectors[start : start + M]
    if len(chunk) == M:
        return chunk.copy(), M
    padded = np.zeros((M, vectors.shape[1]))
    padded[: len(chunk)] = chunk
    return padded, len(chunk)


def _origin(origin: Optional[WindowOrigin], start: int) -> Optional[WindowOrigin]:
    if origin is None:
        return None
    return WindowOrigin(origin.user, origin.session, origin.task, start, origin.performed_by)


def window_starts(length: int, M: int, stride: int, cap: int) -> List[int]:
    """Start indices of the scoring windows of a sequence of ``length`` rows."""
    if length <= M:
        return [0]
    starts = list(range(0, length - M + 1, stride))
    if len(starts) > cap:
        picks = np.linspace(0, len(starts) - 1, cap).astype(int)
        starts = [starts[i] for i in picks]
    return starts


def make_windows(
    fs: FeatureSequence, M: int, stride: int, cap: int = DEFAULT_CAP, origin: Optional[WindowOrigin] = None
) -> List[Window]:
    """
    Cut overlapping windows starting at 0, stride, 2*stride, ...

    Only full windows are produced when the sequence holds at least M rows;
    a shorter sequence yields one zero-padded window. At most ``cap`` windows
    are kept, evenly spaced over the session.
    """
    if M < 1 or stride < 1 or cap < 1:
        raise ValueError(f"window length, stride and cap must be positive, got {M}, {stride}, {cap}")
    if len(fs) == 0:
        return []
    windows = []
    for start in window_starts(len(fs), M, stride, cap):
        data, valid = _slice(fs.vectors, start, M)
        windows.append(Window(data=data, valid_len=valid, origin=_origin(origin, start)))
    return windows


def random_windows(
    fs: FeatureSequence, M: int, count: int, rng: np.random.Generator, origin: Optional[WindowOrigin] = None
) -> List[Window]:
    """Windows at uniformly drawn start instants, full windows whenever the sequence allows."""
    if len(fs) == 0 or count < 1:
        return []
    high = max(len(fs) - M, 0)
    starts = rng.integers(0, high + 1, size=count)
    windows = []
    for start in starts:
        data, valid = _slice(fs.vectors, int(start), M)
        windows.append(Window(data=data, valid_len=valid, origin=_origin(origin, int(start))))
    return windows


def scoring_windows(
    session: Session, owner: str, task: Task, modality: ModalityId, cap: int = DEFAULT_CAP
) -> List[Window]:
    """Canonical overlapping windows of one session, task and modality."""
    fs = extract(session, task, modality)
    if fs is None:
        return []
    M, stride = WINDOW_POLICY[modality]
    origin = WindowOrigin(owner, session.session_id, task.value, 0, session.performed_by)
    return make_windows(fs, M, stride, cap, origin)


def stack_windows(windows: Sequence[Window]) -> Tuple[np.ndarray, np.ndarray]:
    """Batch tensor (B, M, dim) and valid lengths (B,) of equally shaped windows."""
    data = np.stack([w.data for w in windows])
    lengths = np.array([w.valid_len for w in windows], dtype=int)
    return data, lengths
