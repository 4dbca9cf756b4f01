import logging
from typing import Dict, List

import pandas as pd
from pydantic import BaseModel, Field

from behavepass.core.features import WINDOW_POLICY, extract, make_windows
from behavepass.schemas.config import RunConfig
from behavepass.schemas.dataset import Dataset, Split
from behavepass.tools.base import PipelineTool, RunLayout, StageOutput

logger = logging.getLogger(__name__)


class PreprocessInput(BaseModel):
    """Input parameters for feature preprocessing"""

    dump_features: bool = Field(False, description="Also write every feature sequence as CSV")


class PreprocessOutput(StageOutput):
    windows: Dict[str, int] = Field(default_factory=dict, description="Scoring windows per split")


class FeaturePreprocessor:
    """Counts windows and optionally dumps the feature sequences of one dataset"""

    def __init__(self, config: RunConfig):
        self.config = config

    def summarize(self, dataset: Dataset, dump_dir=None) -> List[Dict]:
        rows = []
        for user in dataset.users:
            for session in user.sessions:
                for task in self.config.tasks:
                    for modality in self.config.modalities:
                        if not modality.is_sensor and modality.task is not task:
                            continue
                        fs = extract(session, task, modality)
                        if fs is None:
                            continue
                        M, stride = WINDOW_POLICY[modality]
                        rows.append(
                            {
                                "split": dataset.split.value,
                                "user": user.user_id,
                                "session": session.session_id,
                                "performed_by": session.performed_by,
                                "task": task.value,
                                "modality": modality.value,
                                "samples": len(fs),
                                "windows": len(make_windows(fs, M, stride, self.config.cap)),
                            }
                        )
                        if dump_dir is not None:
                            name = f"{user.user_id}_s{session.session_id}_{session.performed_by}_{task.value}_{modality.value}.csv"
                            fs.dump_csv(dump_dir / name)
        return rows


class PreprocessTool(PipelineTool[PreprocessInput, PreprocessOutput]):
    """Tool turning raw series into feature sequences and windows"""

    tool_name = "preprocess"
    description = "Normalizes sessions, derives feature vectors and reports window counts"
    input_schema = PreprocessInput
    output_schema = PreprocessOutput

    def execute(self, config: RunConfig, params: PreprocessInput) -> PreprocessOutput:
        layout = RunLayout(config)
        preprocessor = FeaturePreprocessor(config)
        output = PreprocessOutput()
        rows: List[Dict] = []
        for split in Split:
            dataset = layout.load(split, required=split is Split.TRAIN)
            if dataset is None:
                continue
            output.inputs.append(str(layout.split_file(split)))
            dump_dir = layout.features / split.value if params.dump_features or config.dump_features else None
            split_rows = preprocessor.summarize(dataset, dump_dir)
            output.windows[split.value] = sum(r["windows"] for r in split_rows)
            rows.extend(split_rows)

        frame = pd.DataFrame(
            rows, columns=["split", "user", "session", "performed_by", "task", "modality", "samples", "windows"]
        )
        path = layout.features / "summary.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False)
        output.written.append(str(path))
        logger.info(f"Feature summary: {output.windows}")
        return output
