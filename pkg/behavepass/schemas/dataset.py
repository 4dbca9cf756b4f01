"""
In-memory dataset model.

Containers are frozen dataclasses holding numpy arrays; the arrays are marked
read-only on construction so a loaded or generated dataset can be shared
between scoring passes without copies.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, List, Mapping, Optional, Tuple

import numpy as np

SCHEMA_VERSION = "behavepass-canon/1"
TOUCH_CHANNEL = "touch"
DEFAULT_SCREEN = (1080, 2340)


class Split(str, Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    EVALUATION = "evaluation"


class Task(str, Enum):
    """Touch tasks evaluated by the benchmark."""

    KEYSTROKE = "keystroke"
    TEXT_READING = "text_reading"
    GALLERY_SWIPING = "gallery_swiping"
    TAPPING = "tapping"

    @property
    def touch_modality(self) -> "ModalityId":
        return ModalityId(self.value)


class ModalityId(str, Enum):
    """The nine trainable modalities: four touch tasks and five background sensors."""

    KEYSTROKE = "keystroke"
    TEXT_READING = "text_reading"
    GALLERY_SWIPING = "gallery_swiping"
    TAPPING = "tapping"
    ACCELEROMETER = "accelerometer"
    GRAVITY = "gravity"
    GYROSCOPE = "gyroscope"
    LINEAR_ACCELEROMETER = "linear_accelerometer"
    MAGNETOMETER = "magnetometer"

    @property
    def is_sensor(self) -> bool:
        return self in SENSOR_MODALITIES

    @property
    def task(self) -> Optional[Task]:
        """The task a touch modality belongs to; None for sensors."""
        return None if self.is_sensor else Task(self.value)

    @property
    def channel_key(self) -> str:
        """Key of this modality inside a session task map."""
        return self.value if self.is_sensor else TOUCH_CHANNEL

    @property
    def code(self) -> str:
        return MODALITY_CODES[self]

    @property
    def feature_dim(self) -> int:
        if self.is_sensor:
            return 12
        return 2 if self is ModalityId.KEYSTROKE else 8

    @property
    def raw_columns(self) -> Tuple[str, ...]:
        if self.is_sensor:
            return ("x", "y", "z")
        return ("ascii",) if self is ModalityId.KEYSTROKE else ("x", "y")


TOUCH_MODALITIES = (
    ModalityId.KEYSTROKE,
    ModalityId.TEXT_READING,
    ModalityId.GALLERY_SWIPING,
    ModalityId.TAPPING,
)
SENSOR_MODALITIES = (
    ModalityId.ACCELEROMETER,
    ModalityId.GRAVITY,
    ModalityId.GYROSCOPE,
    ModalityId.LINEAR_ACCELEROMETER,
    ModalityId.MAGNETOMETER,
)
MODALITY_CODES = {
    ModalityId.KEYSTROKE: "K",
    ModalityId.TEXT_READING: "TR",
    ModalityId.GALLERY_SWIPING: "GS",
    ModalityId.TAPPING: "TP",
    ModalityId.ACCELEROMETER: "A",
    ModalityId.GRAVITY: "Gr",
    ModalityId.GYROSCOPE: "Gy",
    ModalityId.LINEAR_ACCELEROMETER: "L",
    ModalityId.MAGNETOMETER: "M",
}


def modality_from_channel(task: Task, channel_key: str) -> Optional[ModalityId]:
    """Resolve the modality stored under ``channel_key`` of ``task``; None if unknown."""
    if channel_key == TOUCH_CHANNEL:
        return task.touch_modality
    try:
        modality = ModalityId(channel_key)
    except ValueError:
        return None
    return modality if modality.is_sensor else None


def _frozen(values) -> np.ndarray:
    array = np.array(values, dtype=np.float64)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ChannelSeries:
    """Timestamps in milliseconds plus equally long named real-valued channels."""

    t: np.ndarray
    columns: Mapping[str, np.ndarray]

    def __post_init__(self):
        t = _frozen(self.t).reshape(-1)
        columns = {name: _frozen(values).reshape(-1) for name, values in self.columns.items()}
        for name, values in columns.items():
            if len(values) != len(t):
                raise ValueError(
                    f"column '{name}' has {len(values)} values but there are {len(t)} timestamps"
                )
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "columns", columns)

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ChannelSeries):
            return NotImplemented
        if list(self.columns) != list(other.columns) or not np.array_equal(self.t, other.t):
            return False
        return all(np.array_equal(self.columns[k], other.columns[k]) for k in self.columns)

    __hash__ = None

    def replace(self, t: Optional[np.ndarray] = None, **columns: np.ndarray) -> "ChannelSeries":
        """Return a copy with the given timestamps and/or columns swapped in."""
        merged = dict(self.columns)
        merged.update(columns)
        return ChannelSeries(t=self.t if t is None else t, columns=merged)


@dataclass(frozen=True)
class Session:
    """One acquisition session: per task, the series recorded for each modality."""

    session_id: int
    device_id: str
    performed_by: str
    tasks: Mapping[str, Mapping[str, ChannelSeries]]
    screen: Tuple[int, int] = DEFAULT_SCREEN

    def series(self, task: Task, modality: ModalityId) -> Optional[ChannelSeries]:
        if not modality.is_sensor and modality.task is not task:
            return None
        return self.tasks.get(task.value, {}).get(modality.channel_key)


@dataclass(frozen=True)
class UserRecord:
    """Owner, owned device and every session recorded on that device."""

    user_id: str
    device_id: str
    sessions: Tuple[Session, ...] = field(default_factory=tuple)

    @property
    def genuine_sessions(self) -> List[Session]:
        return [s for s in self.sessions if s.performed_by == self.user_id]

    @property
    def impostor_sessions(self) -> List[Session]:
        return [s for s in self.sessions if s.performed_by != self.user_id]

    def session(self, session_id: int) -> Optional[Session]:
        """The owner's own session with the given number."""
        for candidate in self.genuine_sessions:
            if candidate.session_id == session_id:
                return candidate
        return None


@dataclass(frozen=True)
class Dataset:
    split: Split
    users: Tuple[UserRecord, ...]
    schema: str = SCHEMA_VERSION
    unknown_channels: Tuple[str, ...] = ()

    def __iter__(self) -> Iterator[UserRecord]:
        return iter(self.users)

    def __len__(self) -> int:
        return len(self.users)

    def user(self, user_id: str) -> UserRecord:
        for record in self.users:
            if record.user_id == user_id:
                return record
        raise KeyError(user_id)

    @property
    def user_ids(self) -> List[str]:
        return [u.user_id for u in self.users]
