import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from pydantic import BaseModel, ValidationError

from behavepass.core.errors import ConfigurationError
from behavepass.core.report import read_results
from behavepass.schemas.config import Preset, RunConfig, Scenario
from behavepass.schemas.dataset import MODALITY_CODES, SENSOR_MODALITIES, Split, Task
from behavepass.tools.base import RunLayout
from behavepass.tools.evaluate import EvaluateTool
from behavepass.tools.preprocess import PreprocessTool
from behavepass.tools.report import ReportTool
from behavepass.tools.score import ScoreTool
from behavepass.tools.synth import SynthTool
from behavepass.tools.train import TrainTool
from behavepass.tools.validate import ValidateTool

PIPELINE = ["validate", "preprocess", "train", "score", "evaluate", "report"]


class Orchestrator:
    """Coordinates the pipeline stages"""

    def __init__(self, tools: List):
        self.tools = {tool.tool_name: tool for tool in tools}
        self.logger = logging.getLogger(__name__)

    def run(self, tool_name: str, config: RunConfig, parameters: Optional[Dict[str, Any]] = None) -> BaseModel:
        """
        Run one stage

        Raises:
            ConfigurationError: unknown stage or invalid stage parameters
        """
        if tool_name not in self.tools:
            raise ConfigurationError(f"Tool '{tool_name}' not found")
        tool = self.tools[tool_name]
        try:
            params_model = tool.input_schema(**(parameters or {}))
        except ValidationError as error:
            raise ConfigurationError(f"invalid parameters for {tool_name}: {error}") from error

        self.logger.info(f"Executing {tool_name} with parameters: {params_model}")
        return tool.execute(config, params_model)

    def run_all(self, config: RunConfig, parameters: Optional[Dict[str, Dict[str, Any]]] = None) -> Dict[str, BaseModel]:
        """Synthesize (when no input directory is set) and run every stage in order"""
        parameters = parameters or {}
        outputs: Dict[str, BaseModel] = {}
        stages = PIPELINE if config.input_dir else ["synth"] + PIPELINE
        for stage in stages:
            outputs[stage] = self.run(stage, config, parameters.get(stage))
        return outputs

    def device_bias_study(self, config: RunConfig, seeds: Sequence[int]) -> pd.DataFrame:
        """
        Random-minus-skilled AUC gap of each sensor with device effects on and off.

        Every seed runs the full synthetic pipeline twice under
        ``<output_dir>/device_bias/``: once with the configured device model, once
        with gain 1 and offset 0, which also silences the device resonance.
        Gaps are averaged over tasks.
        """
        rows = []
        base = Path(config.output_dir) / "device_bias"
        for seed in seeds:
            for effects in (True, False):
                update = {
                    "seed": seed,
                    "input_dir": None,
                    "output_dir": str(base / f"seed{seed}_{'device' if effects else 'flat'}"),
                }
                if not effects:
                    update.update(device_gain_range=(1.0, 1.0), device_offset_range=(0.0, 0.0))
                run_config = config.model_copy(update=update)
                self.run_all(run_config)
                results = read_results(RunLayout(run_config).results)
                by_key = {(r.task, r.subset, r.scenario): r.auc_percent for r in results if r.split == Split.EVALUATION.value}
                for modality in SENSOR_MODALITIES:
                    code = MODALITY_CODES[modality]
                    pairs = [
                        (by_key.get((t.value, code, Scenario.RANDOM.value)), by_key.get((t.value, code, Scenario.SKILLED.value)))
                        for t in Task
                    ]
                    pairs = [(r, s) for r, s in pairs if r is not None and s is not None]
                    if not pairs:
                        continue
                    random_auc = sum(r for r, _ in pairs) / len(pairs)
                    skilled_auc = sum(s for _, s in pairs) / len(pairs)
                    rows.append(
                        {
                            "seed": seed,
                            "device_effects": effects,
                            "modality": modality.value,
                            "random_auc": random_auc,
                            "skilled_auc": skilled_auc,
                            "gap": random_auc - skilled_auc,
                        }
                    )
                self.logger.info(f"Device-bias run seed={seed} effects={effects} done")
        return pd.DataFrame(rows, columns=["seed", "device_effects", "modality", "random_auc", "skilled_auc", "gap"])


def device_bias_config(output_dir: str, **overrides: Any) -> RunConfig:
    """
    Reduced desk configuration for the device-bias study.

    Sensor modalities only, short sessions and few epochs, with more
    evaluation users so the averaged gaps are stable across five seeds.
    """
    values: Dict[str, Any] = {
        "preset": Preset.DESK,
        "output_dir": output_dir,
        "users": 8,
        "val_users": 2,
        "eval_users": 12,
        "samples_per_task": 400,
        "touch_events_per_task": 60,
        "keystrokes_per_task": 60,
        "epochs": 10,
        "batch_size": 64,
        "windows_per_session": 8,
        "cap": 6,
        "modalities": list(SENSOR_MODALITIES),
    }
    values.update(overrides)
    return RunConfig(**values)


def build_orchestrator() -> Orchestrator:
    tools = [SynthTool(), ValidateTool(), PreprocessTool(), TrainTool(), ScoreTool(), EvaluateTool(), ReportTool()]
    return Orchestrator(tools=tools)
