import logging
from typing import Dict

from pydantic import BaseModel, Field

from behavepass.core.protocol import read_scores
from behavepass.core.report import collect_results, write_results
from behavepass.schemas.config import RunConfig
from behavepass.schemas.dataset import Split
from behavepass.tools.base import PipelineTool, RunLayout, StageOutput
from behavepass.tools.score import SCORED_SPLITS, ScoreInput, ScoreTool

logger = logging.getLogger(__name__)


class EvaluateInput(BaseModel):
    """Input parameters for evaluation"""

    rescore: bool = Field(False, description="Recompute scores even when score files exist")


class EvaluateOutput(StageOutput):
    results: Dict[str, int] = Field(default_factory=dict, description="EvalResults per split")


class EvaluateTool(PipelineTool[EvaluateInput, EvaluateOutput]):
    """Tool turning session scores into AUCs and rank-sum p-values"""

    tool_name = "evaluate"
    description = "Computes AUC and Wilcoxon rank-sum results for every task, subset and scenario"
    input_schema = EvaluateInput
    output_schema = EvaluateOutput

    def execute(self, config: RunConfig, params: EvaluateInput) -> EvaluateOutput:
        layout = RunLayout(config)
        output = EvaluateOutput()
        if params.rescore or not layout.scores(Split.EVALUATION).is_file():
            logger.info("Scores missing, scoring first")
            scored = ScoreTool().execute(config, ScoreInput())
            output.inputs.extend(scored.inputs)
            output.written.extend(scored.written)

        results = []
        for split in SCORED_SPLITS:
            path = layout.scores(split)
            if not path.is_file():
                continue
            output.inputs.append(str(path))
            split_results = collect_results(read_scores(path), split)
            output.results[split.value] = len(split_results)
            results.extend(split_results)
        output.written.append(str(write_results(results, layout.results)))
        return output
