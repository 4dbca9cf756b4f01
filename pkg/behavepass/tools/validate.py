import json
import logging
from typing import Dict

from pydantic import BaseModel, Field

from behavepass.core.dataset import validate_dataset
from behavepass.schemas.config import RunConfig
from behavepass.schemas.dataset import Split
from behavepass.tools.base import PipelineTool, RunLayout, StageOutput

logger = logging.getLogger(__name__)


class ValidateInput(BaseModel):
    """Input parameters for dataset validation"""

    require_all_splits: bool = Field(False, description="Fail when the validation or evaluation split is absent")


class ValidateOutput(StageOutput):
    findings: Dict[str, int] = Field(default_factory=dict, description="Finding count per split")


class ValidateTool(PipelineTool[ValidateInput, ValidateOutput]):
    """Tool scanning every available split for schema-level data problems"""

    tool_name = "validate"
    description = "Reports missing modalities, non-monotone timestamps, empty series and unknown modalities"
    input_schema = ValidateInput
    output_schema = ValidateOutput

    def execute(self, config: RunConfig, params: ValidateInput) -> ValidateOutput:
        layout = RunLayout(config)
        output = ValidateOutput()
        reports = []
        for split in Split:
            dataset = layout.load(split, required=params.require_all_splits or split is Split.TRAIN)
            if dataset is None:
                continue
            output.inputs.append(str(layout.split_file(split)))
            report = validate_dataset(dataset)
            output.findings[split.value] = len(report.findings)
            reports.append(report.model_dump(mode="json"))
            logger.info(f"{split.value}: {len(dataset)} users, {len(report.findings)} findings")

        path = layout.out / "validation_report.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(reports, indent=2) + "\n", encoding="utf-8")
        output.written.append(str(path))
        return output
