"""
Command-line entry point: ``bpb <command> [options]``.

Commands: synth, validate, preprocess, train, score, evaluate, report, all.
Configuration precedence: preset, then ``--config`` file, then flags.
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from dotenv import load_dotenv

from behavepass import __version__
from behavepass.core.errors import BehavePassError
from behavepass.core.manifest import load_manifest, write_manifest
from behavepass.core.orchestrator import build_orchestrator
from behavepass.core.settings import load_config_file, resolve_config
from behavepass.schemas.config import Preset, RunConfig
from behavepass.schemas.dataset import MODALITY_CODES, ModalityId, Task

logger = logging.getLogger(__name__)

COMMANDS = ["synth", "validate", "preprocess", "train", "score", "evaluate", "report", "all"]

# flag dest -> RunConfig field
OVERRIDES = [
    "seed", "users", "val_users", "eval_users", "samples_per_task", "touch_events_per_task",
    "keystrokes_per_task", "noise_std", "impostor_imitation", "hidden_units", "embedding_dim",
    "epochs", "batch_size", "learning_rate", "margin", "windows_per_session", "cap", "pairing",
]


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    # Load environment variables from .env file
    load_dotenv()
    level = os.getenv("BPB_LOG_LEVEL", "INFO").upper()
    if verbose:
        level = "DEBUG"
    elif quiet:
        level = "WARNING"
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[logging.StreamHandler(sys.stderr)],
    )
    logging.getLogger().setLevel(getattr(logging, level, logging.INFO))


def _modalities(text: str) -> List[ModalityId]:
    by_code = {code.lower(): m for m, code in MODALITY_CODES.items()}
    out = []
    for item in text.split(","):
        key = item.strip()
        try:
            out.append(by_code.get(key.lower()) or ModalityId(key))
        except ValueError:
            raise argparse.ArgumentTypeError(f"unknown modality '{key}'")
    return out


def _tasks(text: str) -> List[Task]:
    try:
        return [Task(item.strip()) for item in text.split(",")]
    except ValueError as error:
        raise argparse.ArgumentTypeError(str(error))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bpb", description="BehavePass mobile behavioural-biometrics benchmark")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-i", "--input", dest="input_dir", help="directory with train/validation/evaluation JSON files")
    common.add_argument("-o", "--output", dest="output_dir", help="output directory (default: out)")
    common.add_argument("--preset", choices=[p.value for p in Preset], help="scale preset (default: desk)")
    common.add_argument("--config", help="KEY=value configuration file")
    common.add_argument("--manifest", help="re-run with the configuration recorded in a manifest.json")
    common.add_argument("--seed", type=int)
    common.add_argument("--users", type=int, help="synthetic training users")
    common.add_argument("--val-users", type=int)
    common.add_argument("--eval-users", type=int)
    common.add_argument("--samples-per-task", type=int)
    common.add_argument("--touch-events-per-task", type=int)
    common.add_argument("--keystrokes-per-task", type=int)
    common.add_argument("--noise-std", type=float)
    common.add_argument("--impostor-imitation", type=float)
    common.add_argument("--hidden-units", type=int)
    common.add_argument("--embedding-dim", type=int)
    common.add_argument("--epochs", type=int)
    common.add_argument("--batch-size", type=int)
    common.add_argument("--learning-rate", type=float)
    common.add_argument("--margin", type=float)
    common.add_argument("--windows-per-session", type=int)
    common.add_argument("--cap", type=int, help="maximum scoring windows per session")
    common.add_argument("--tasks", type=_tasks, help="comma-separated task filter")
    common.add_argument("--modalities", type=_modalities, help="comma-separated modality filter (names or codes)")
    common.add_argument("--pairing", choices=["rotation", "shuffle"])
    common.add_argument("--augment", action="store_true", default=None, help="device-noise augmentation")
    common.add_argument("--znorm", action="store_true", default=None, help="z-normalize scores before fusion")
    common.add_argument(
        "--separate-enrolment", action="store_true", default=None,
        help="average per-session scores instead of pooling sessions 1 and 2",
    )
    common.add_argument("--dump-features", action="store_true", default=None)
    common.add_argument("--force", action="store_true", help="allow overriding canonical constants")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")

    commands = parser.add_subparsers(dest="command", required=True, metavar="command")
    helps = {
        "synth": "generate synthetic datasets into -o",
        "validate": "check input datasets",
        "preprocess": "derive features and window counts",
        "train": "train the per-modality networks",
        "score": "score evaluation (and validation) sessions",
        "evaluate": "compute AUCs and rank-sum tests",
        "report": "render result tables",
        "all": "run the whole pipeline",
    }
    for name in COMMANDS:
        commands.add_parser(name, parents=[common], help=helps[name])
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    file_values: Dict[str, Any] = {}
    preset = Preset(args.preset) if args.preset else None
    if args.manifest:
        _, recorded = load_manifest(args.manifest)
        file_values.update(recorded.model_dump(exclude={"preset", "force", "output_dir"}))
        preset = preset or recorded.preset
    if args.config:
        file_values.update(load_config_file(args.config))
    overrides: Dict[str, Any] = {name: getattr(args, name) for name in OVERRIDES}
    overrides.update(
        input_dir=args.input_dir,
        output_dir=args.output_dir,
        tasks=args.tasks,
        modalities=args.modalities,
        augment=args.augment,
        znorm=args.znorm,
        pool_enrolment=False if args.separate_enrolment else None,
        dump_features=args.dump_features,
    )
    return resolve_config(preset or Preset.DESK, file_values, overrides, force=args.force)


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_request:
        return int(exit_request.code or 0)

    configure_logging(args.verbose, args.quiet)
    try:
        config = config_from_args(args)
        orchestrator = build_orchestrator()
        if args.command == "all":
            outputs = list(orchestrator.run_all(config).values())
        elif args.command == "synth":
            outputs = [orchestrator.run("synth", config, {"data_dir": config.output_dir})]
        else:
            outputs = [orchestrator.run(args.command, config)]
        inputs = [Path(p) for output in outputs for p in getattr(output, "inputs", [])]
        manifest = write_manifest(config.output_dir, args.command, config, inputs)
        logger.info(f"{args.command} finished; manifest at {manifest}")
        return 0
    except BehavePassError as error:
        logger.error(f"{type(error).__name__}: {error}")
        return error.exit_code
    except Exception as error:
        logger.exception(f"Unexpected error: {error}")
        return 1


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
