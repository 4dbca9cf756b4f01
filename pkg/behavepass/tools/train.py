import logging
from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from behavepass.core.net import save_checkpoint
from behavepass.core.trainer import Miner, train_modality
from behavepass.schemas.config import RunConfig
from behavepass.schemas.dataset import ModalityId, Split
from behavepass.tools.base import PipelineTool, RunLayout, StageOutput
from behavepass.tools.score import needed_modalities

logger = logging.getLogger(__name__)


class TrainInput(BaseModel):
    """Input parameters for model training"""

    modalities: Optional[List[ModalityId]] = Field(None, description="Modalities to train (default: the run's filter)")


class TrainOutput(StageOutput):
    final_loss: Dict[str, float] = Field(default_factory=dict, description="Last epoch loss per modality")


class TrainTool(PipelineTool[TrainInput, TrainOutput]):
    """Tool training one embedding network per modality on the train split"""

    tool_name = "train"
    description = "Trains the per-modality recurrent embedding networks with the triplet loss"
    input_schema = TrainInput
    output_schema = TrainOutput

    def __init__(self, miner: Optional[Miner] = None):
        self.miner = miner

    def execute(self, config: RunConfig, params: TrainInput) -> TrainOutput:
        layout = RunLayout(config)
        dataset = layout.load(Split.TRAIN)
        output = TrainOutput(inputs=[str(layout.split_file(Split.TRAIN))])
        hyper = config.hyper()
        for modality in params.modalities or needed_modalities(config):
            result = train_modality(dataset, modality, hyper, config.model_spec(modality), config.seed, self.miner)
            output.written.append(str(save_checkpoint(result.params, layout.checkpoint(modality), modality)))
            output.written.append(str(result.write_log(layout.training_log(modality))))
            output.final_loss[modality.value] = result.losses[-1]
        logger.info(f"Trained {len(output.final_loss)} modalities")
        return output
