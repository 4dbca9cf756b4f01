import logging
from typing import Dict, List, Tuple

from pydantic import BaseModel, Field

from behavepass.core.errors import MissingArtifactError
from behavepass.core.net import ModelParams, load_checkpoint
from behavepass.core.protocol import EmbeddingIndex, ScoreSet, Subset, score_task, write_scores
from behavepass.schemas.config import RunConfig
from behavepass.schemas.dataset import Dataset, ModalityId, Split, Task
from behavepass.tools.base import PipelineTool, RunLayout, StageOutput

logger = logging.getLogger(__name__)

SCORED_SPLITS = (Split.EVALUATION, Split.VALIDATION)


class ScoreInput(BaseModel):
    """Input parameters for session scoring"""

    include_validation: bool = Field(True, description="Also score the validation split when present")


class ScoreOutput(StageOutput):
    scores: Dict[str, int] = Field(default_factory=dict, description="Session scores written per split")


def needed_modalities(config: RunConfig) -> List[ModalityId]:
    """Modalities taking part in the scored tasks, after the run's filter."""
    wanted = []
    for modality in ModalityId:
        if modality not in config.modalities:
            continue
        if modality.is_sensor or modality.task in config.tasks:
            wanted.append(modality)
    return wanted


def load_models(layout: RunLayout, config: RunConfig) -> Dict[ModalityId, ModelParams]:
    models = {}
    for modality in needed_modalities(config):
        path = layout.checkpoint(modality)
        if not path.is_file():
            raise MissingArtifactError(str(path), "run `bpb train` first")
        models[modality] = load_checkpoint(path, config.model_spec(modality))
    return models


def score_split(
    dataset: Dataset, models: Dict[ModalityId, ModelParams], config: RunConfig
) -> Dict[Tuple[Task, Subset], ScoreSet]:
    index = EmbeddingIndex(models, config.cap)
    sets: Dict[Tuple[Task, Subset], ScoreSet] = {}
    for task in config.tasks:
        per_subset = score_task(
            dataset,
            models,
            task,
            pairing=config.pairing,
            seed=config.seed,
            cap=config.cap,
            pool_enrolment=config.pool_enrolment,
            znorm=config.znorm,
            modalities=config.modalities,
            index=index,
        )
        sets.update({(task, subset): score_set for subset, score_set in per_subset.items()})
    return sets


class ScoreTool(PipelineTool[ScoreInput, ScoreOutput]):
    """Tool computing session scores of every task and modality subset"""

    tool_name = "score"
    description = "Embeds scoring windows and writes genuine / random / skilled session scores"
    input_schema = ScoreInput
    output_schema = ScoreOutput

    def execute(self, config: RunConfig, params: ScoreInput) -> ScoreOutput:
        layout = RunLayout(config)
        models = load_models(layout, config)
        output = ScoreOutput(inputs=[str(layout.checkpoint(m)) for m in models])
        for split in SCORED_SPLITS:
            if split is Split.VALIDATION and not params.include_validation:
                continue
            dataset = layout.load(split, required=split is Split.EVALUATION)
            if dataset is None:
                logger.info(f"No {split.value} split, skipping")
                continue
            output.inputs.append(str(layout.split_file(split)))
            sets = score_split(dataset, models, config)
            output.written.append(str(write_scores(list(sets.values()), layout.scores(split))))
            output.scores[split.value] = sum(len(s.all_scores()) for s in sets.values())
        return output
