from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, Generic, List, Optional, TypeVar

from pydantic import BaseModel, Field

from behavepass.core.dataset import load_dataset
from behavepass.core.errors import MissingArtifactError
from behavepass.schemas.config import RunConfig
from behavepass.schemas.dataset import Dataset, ModalityId, Split

# Generic type variables for input and output schemas
I = TypeVar("I", bound=BaseModel)
O = TypeVar("O", bound=BaseModel)


class StageOutput(BaseModel):
    """Fields every stage reports"""

    inputs: List[str] = Field(default_factory=list, description="Files the stage read")
    written: List[str] = Field(default_factory=list, description="Files the stage wrote")


class RunLayout:
    """File locations of one run, derived from the RunConfig"""

    def __init__(self, config: RunConfig):
        self.out = Path(config.output_dir)
        self.data = Path(config.input_dir) if config.input_dir else self.out / "data"

    def split_file(self, split: Split) -> Path:
        return self.data / f"{split.value}.json"

    def load(self, split: Split, required: bool = True) -> Optional[Dataset]:
        path = self.split_file(split)
        if not path.is_file():
            if required:
                raise MissingArtifactError(str(path), "run `bpb synth` or pass -i with canonical JSON files")
            return None
        return load_dataset(path)

    @property
    def models(self) -> Path:
        return self.out / "models"

    def checkpoint(self, modality: ModalityId) -> Path:
        return self.models / f"{modality.value}.json"

    def training_log(self, modality: ModalityId) -> Path:
        return self.models / f"{modality.value}_train_log.csv"

    def scores(self, split: Split) -> Path:
        suffix = "" if split is Split.EVALUATION else f"_{split.value}"
        return self.out / f"scores{suffix}.csv"

    @property
    def results(self) -> Path:
        return self.out / "results.json"

    @property
    def report(self) -> Path:
        return self.out / "report"

    @property
    def features(self) -> Path:
        return self.out / "features"


class PipelineTool(Generic[I, O], ABC):
    """Base class for all pipeline stages"""

    tool_name: str
    description: str
    input_schema: type[I]
    output_schema: type[O]

    @abstractmethod
    def execute(self, config: RunConfig, params: I) -> O:
        """Run the stage for the given configuration"""
        pass

    def get_tool_definition(self) -> Dict[str, Any]:
        """Return tool definition for help output and manifests"""
        return {
            "name": self.tool_name,
            "description": self.description,
            "input_schema": self.input_schema.model_json_schema(),
            "output_schema": self.output_schema.model_json_schema(),
        }
