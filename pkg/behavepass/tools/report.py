import logging

from pydantic import BaseModel

from behavepass.core.errors import MissingArtifactError
from behavepass.core.protocol import read_scores
from behavepass.core.report import read_results, render_report
from behavepass.schemas.config import RunConfig
from behavepass.schemas.dataset import Split
from behavepass.tools.base import PipelineTool, RunLayout, StageOutput

logger = logging.getLogger(__name__)


class ReportInput(BaseModel):
    """Input parameters for report rendering"""


class ReportOutput(StageOutput):
    pass


class ReportTool(PipelineTool[ReportInput, ReportOutput]):
    """Tool rendering the result tables, ROC data and text summary"""

    tool_name = "report"
    description = "Writes unimodal, fusion, Wilcoxon and ROC tables plus a text summary"
    input_schema = ReportInput
    output_schema = ReportOutput

    def execute(self, config: RunConfig, params: ReportInput) -> ReportOutput:
        layout = RunLayout(config)
        for artifact in (layout.results, layout.scores(Split.EVALUATION)):
            if not artifact.is_file():
                raise MissingArtifactError(str(artifact), "run `bpb evaluate` first")
        results = read_results(layout.results)
        score_sets = read_scores(layout.scores(Split.EVALUATION))
        written = render_report(results, score_sets, layout.report)
        return ReportOutput(
            inputs=[str(layout.results), str(layout.scores(Split.EVALUATION))], written=[str(p) for p in written]
        )
