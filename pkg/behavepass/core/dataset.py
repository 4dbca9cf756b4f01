import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from behavepass.core.errors import DatasetSchemaError
from behavepass.schemas.canonical import CanonDataset
from behavepass.schemas.dataset import (
    DEFAULT_SCREEN,
    SCHEMA_VERSION,
    SENSOR_MODALITIES,
    ChannelSeries,
    Dataset,
    ModalityId,
    Session,
    Split,
    Task,
    UserRecord,
    modality_from_channel,
)

logger = logging.getLogger(__name__)

INTEGER_COLUMNS = {"ascii"}


class Finding(BaseModel):
    """One problem found by validate_dataset"""

    kind: str = Field(..., description="missing_modality | non_monotone | empty_series | unknown_modality")
    user: str
    session: Optional[int] = None
    task: Optional[str] = None
    modality: Optional[str] = None
    index: Optional[int] = Field(None, description="First offending sample for non_monotone")
    message: str


class ValidationReport(BaseModel):
    split: Split
    users: int
    findings: List[Finding] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings


# ----------------------------------------------------------------------------
# serialization


def _series_to_json(series: ChannelSeries) -> Dict[str, List[Any]]:
    payload: Dict[str, List[Any]] = {"t": series.t.tolist()}
    for name, values in series.columns.items():
        if name in INTEGER_COLUMNS:
            payload[name] = [int(v) for v in values]
        else:
            payload[name] = values.tolist()
    return payload


def dataset_to_dict(dataset: Dataset) -> Dict[str, Any]:
    """Canonical JSON document for ``dataset``."""
    users = []
    for user in dataset.users:
        sessions = []
        for session in user.sessions:
            tasks = {
                task: {channel: _series_to_json(series) for channel, series in channels.items()}
                for task, channels in session.tasks.items()
            }
            sessions.append(
                {
                    "session": session.session_id,
                    "device": session.device_id,
                    "performed_by": session.performed_by,
                    "screen": {"width": session.screen[0], "height": session.screen[1]},
                    "tasks": tasks,
                }
            )
        users.append({"id": user.user_id, "device": user.device_id, "sessions": sessions})
    return {"schema": dataset.schema, "split": dataset.split.value, "users": users}


def serialize_dataset(dataset: Dataset) -> str:
    return json.dumps(dataset_to_dict(dataset), separators=(",", ":"))


def save_dataset(dataset: Dataset, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_dataset(dataset), encoding="utf-8")
    logger.info(f"Wrote {dataset.split.value} dataset with {len(dataset)} users to {path}")
    return path


# ----------------------------------------------------------------------------
# loading


def _field_path(loc) -> str:
    return ".".join(str(part) for part in loc)


def parse_dataset(text: str) -> Dataset:
    """
    Parse a canonical JSON document.

    Raises:
        DatasetSchemaError: on malformed JSON (with line), on schema violations
            (with the dotted field path) and on a schema-version mismatch
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as error:
        raise DatasetSchemaError(f"invalid JSON: {error.msg}", line=error.lineno) from error

    if isinstance(raw, dict) and raw.get("schema") not in (None, SCHEMA_VERSION):
        raise DatasetSchemaError(
            f"schema version '{raw.get('schema')}' is not supported, expected '{SCHEMA_VERSION}'",
            field="schema",
        )

    try:
        canon = CanonDataset.model_validate(raw)
    except ValidationError as error:
        first = error.errors()[0]
        raise DatasetSchemaError(first["msg"], field=_field_path(first["loc"])) from error

    unknown: List[str] = []
    users = []
    for u_index, canon_user in enumerate(canon.users):
        sessions = []
        for s_index, canon_session in enumerate(canon_user.sessions):
            where = f"users.{u_index}.sessions.{s_index}"
            _check_session_invariants(canon_user.id, canon_user.device, canon_session, where)
            tasks = {}
            for task_key, channels in canon_session.tasks.items():
                tasks[task_key] = {}
                for channel_key, columns in channels.items():
                    if not _is_known(task_key, channel_key):
                        tag = f"{canon_user.id}/s{canon_session.session}/{task_key}/{channel_key}"
                        logger.warning(f"Unknown modality preserved: {tag}")
                        unknown.append(tag)
                    values = dict(columns)
                    t = values.pop("t")
                    tasks[task_key][channel_key] = ChannelSeries(t=np.asarray(t), columns=values)
            screen = (
                (canon_session.screen.width, canon_session.screen.height)
                if canon_session.screen
                else DEFAULT_SCREEN
            )
            sessions.append(
                Session(
                    session_id=canon_session.session,
                    device_id=canon_session.device,
                    performed_by=canon_session.performed_by,
                    tasks=tasks,
                    screen=screen,
                )
            )
        users.append(UserRecord(user_id=canon_user.id, device_id=canon_user.device, sessions=tuple(sessions)))

    return Dataset(split=canon.split, users=tuple(users), schema=canon.schema_name, unknown_channels=tuple(unknown))


def _is_known(task_key: str, channel_key: str) -> bool:
    try:
        task = Task(task_key)
    except ValueError:
        return False
    return modality_from_channel(task, channel_key) is not None


def _check_session_invariants(owner: str, owner_device: str, session, where: str) -> None:
    if session.performed_by == owner:
        return
    if session.session in (1, 2):
        raise DatasetSchemaError(
            f"session {session.session} of user {owner} is performed by {session.performed_by}; "
            "enrolment sessions cannot be impostor sessions",
            field=f"{where}.performed_by",
        )
    if session.device != owner_device:
        raise DatasetSchemaError(
            f"impostor session {session.session} of user {owner} uses device {session.device}, "
            f"not the owner's device {owner_device}",
            field=f"{where}.device",
        )


def load_dataset(path: Union[str, Path]) -> Dataset:
    """Load and validate one canonical dataset file."""
    path = Path(path)
    logger.info(f"Loading dataset: {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as error:
        raise DatasetSchemaError(f"cannot read {path}: {error}") from error
    return parse_dataset(text)


# ----------------------------------------------------------------------------
# validation


def _first_decrease(t: np.ndarray) -> Optional[int]:
    decreasing = np.flatnonzero(np.diff(t) < 0)
    return int(decreasing[0]) + 1 if len(decreasing) else None


def validate_dataset(dataset: Dataset) -> ValidationReport:
    """
    Scan a dataset for missing modalities, non-monotone timestamps and empty series.

    Missing modalities are reported once per user and modality; the other
    findings once per series. The dataset is not modified.
    """
    findings: List[Finding] = []
    for user in dataset.users:
        missing: Dict[ModalityId, List[str]] = {}
        for session in user.sessions:
            for task in Task:
                for modality in (task.touch_modality, *SENSOR_MODALITIES):
                    series = session.series(task, modality)
                    where = f"s{session.session_id}/{task.value}"
                    if series is None:
                        missing.setdefault(modality, []).append(where)
                        continue
                    if len(series) == 0:
                        findings.append(
                            Finding(
                                kind="empty_series",
                                user=user.user_id,
                                session=session.session_id,
                                task=task.value,
                                modality=modality.value,
                                message=f"empty {modality.value} series in {where}",
                            )
                        )
                        continue
                    index = _first_decrease(series.t)
                    if index is not None:
                        findings.append(
                            Finding(
                                kind="non_monotone",
                                user=user.user_id,
                                session=session.session_id,
                                task=task.value,
                                modality=modality.value,
                                index=index,
                                message=f"timestamp decreases at index {index} of {modality.value} in {where}",
                            )
                        )
        for modality, places in missing.items():
            findings.append(
                Finding(
                    kind="missing_modality",
                    user=user.user_id,
                    modality=modality.value,
                    message=f"{modality.value} missing in {len(places)} series ({', '.join(places[:4])})",
                )
            )
    for tag in dataset.unknown_channels:
        findings.append(
            Finding(kind="unknown_modality", user=tag.split("/")[0], message=f"unknown modality {tag}")
        )

    if findings:
        logger.warning(f"Validation of {dataset.split.value} split produced {len(findings)} findings")
    return ValidationReport(split=dataset.split, users=len(dataset), findings=findings)
