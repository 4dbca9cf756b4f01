"""
Run configuration assembly.

Precedence, lowest first: preset defaults, the KEY=value config file, then
command-line overrides. Config files are read with python-dotenv; keys are
RunConfig field names in any case.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from dotenv import dotenv_values
from pydantic import ValidationError

from behavepass.core.errors import ConfigurationError
from behavepass.schemas.config import CANONICAL_CONSTANTS, PRESETS, Preset, RunConfig

logger = logging.getLogger(__name__)

LIST_FIELDS = {"tasks", "modalities"}
RANGE_FIELDS = {"device_gain_range", "device_offset_range", "device_resonance_range", "device_resonance_hz_range"}


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Read a KEY=value config file.

    Raises:
        ConfigurationError: unreadable file or unknown key
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    values: Dict[str, Any] = {}
    for key, raw in dotenv_values(path).items():
        name = key.strip().lower()
        if name not in RunConfig.model_fields:
            raise ConfigurationError(f"{path}: unknown configuration key '{key}'")
        if raw is None:
            continue
        if name in LIST_FIELDS:
            values[name] = [item.strip() for item in raw.split(",") if item.strip()]
        elif name in RANGE_FIELDS:
            values[name] = tuple(float(item) for item in raw.split(","))
        else:
            values[name] = raw.strip()
    logger.debug(f"Loaded {len(values)} settings from {path}")
    return values


def _differs(value: Any, pinned: float) -> bool:
    try:
        return float(value) != float(pinned)
    except (TypeError, ValueError):
        return True


def resolve_config(
    preset: Preset = Preset.DESK,
    file_values: Optional[Mapping[str, Any]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    force: bool = False,
) -> RunConfig:
    """
    Merge preset, file and command-line values into a validated RunConfig.

    Raises:
        ConfigurationError: invalid values, or a canonical constant overridden
            without ``force``
    """
    file_values = dict(file_values or {})
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    if "force" in file_values or "force" in overrides:
        force = force or str(overrides.get("force", file_values.get("force", ""))).lower() in ("1", "true", "yes")

    merged: Dict[str, Any] = {**PRESETS[preset], **file_values, **overrides, "preset": preset, "force": force}
    if preset is Preset.CANONICAL and not force:
        conflicts = [
            f"{name}={merged[name]} (pinned {pinned})"
            for name, pinned in CANONICAL_CONSTANTS.items()
            if name in merged and _differs(merged[name], pinned)
        ]
        if conflicts:
            raise ConfigurationError(
                f"canonical preset pins {', '.join(conflicts)}; use --force to override"
            )
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as error:
        first = error.errors()[0]
        field = ".".join(str(p) for p in first["loc"])
        raise ConfigurationError(f"invalid configuration value for '{field}': {first['msg']}") from error
