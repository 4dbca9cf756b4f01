"""Reproducibility manifest written next to every stage's outputs."""

import hashlib
import json
import logging
import os
import platform
from pathlib import Path
from typing import Any, Dict, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import pydantic
import scipy

import behavepass
from behavepass.core.errors import ConfigurationError, MissingArtifactError
from behavepass.schemas.config import RunConfig

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def file_digest(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def package_versions() -> Dict[str, str]:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.VERSION,
        "behavepass": behavepass.__version__,
    }


def _input_key(path: Path, out_dir: Path) -> str:
    relative = os.path.relpath(path.resolve(), out_dir.resolve())
    return str(path) if relative.startswith("..") else relative


def build_manifest(command: str, config: RunConfig, inputs: Sequence[Path], out_dir: Path) -> Dict[str, Any]:
    """
    Manifest content.

    Holds no wall-clock time and no output directory, so identical runs into
    different directories give identical files.
    """
    files = sorted({Path(p) for p in inputs if Path(p).is_file()}, key=str)
    return {
        "command": command,
        "config": config.model_dump(mode="json", exclude={"output_dir"}),
        "seeds": {"root": config.seed},
        "versions": package_versions(),
        "inputs": {_input_key(p, out_dir): file_digest(p) for p in files},
    }


def write_manifest(out_dir: Union[str, Path], command: str, config: RunConfig, inputs: Sequence[Path] = ()) -> Path:
    path = Path(out_dir) / MANIFEST_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(build_manifest(command, config, inputs, Path(out_dir)), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_manifest(path: Union[str, Path]) -> Tuple[str, RunConfig]:
    """Command and RunConfig recorded in a manifest."""
    path = Path(path)
    if not path.is_file():
        raise MissingArtifactError(str(path), "manifest to re-run from")
    payload = json.loads(path.read_text(encoding="utf-8"))
    try:
        return payload["command"], RunConfig.model_validate(payload["config"])
    except (KeyError, pydantic.ValidationError) as error:
        raise ConfigurationError(f"{path}: manifest does not hold a valid run configuration: {error}") from error
