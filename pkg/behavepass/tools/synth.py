import json
import logging
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from behavepass.core.dataset import save_dataset
from behavepass.core.synthetic import generate_synthetic
from behavepass.schemas.config import RunConfig
from behavepass.schemas.dataset import Split
from behavepass.tools.base import PipelineTool, RunLayout, StageOutput

logger = logging.getLogger(__name__)


class SynthInput(BaseModel):
    """Input parameters for synthetic data generation"""

    splits: List[Split] = Field(default_factory=lambda: list(Split), description="Splits to generate")
    data_dir: Optional[str] = Field(None, description="Target directory (defaults to the run's data directory)")


class SynthOutput(StageOutput):
    users: Dict[str, int] = Field(default_factory=dict, description="Users per generated split")


def split_sizes(config: RunConfig) -> Dict[Split, int]:
    """Owners per split; validation and evaluation default to half the training users (at least 3)."""
    held_out = max(3, config.users // 2)
    return {
        Split.TRAIN: config.users,
        Split.VALIDATION: config.val_users or held_out,
        Split.EVALUATION: config.eval_users or held_out,
    }


class SynthTool(PipelineTool[SynthInput, SynthOutput]):
    """Tool writing one canonical JSON file per split"""

    tool_name = "synth"
    description = "Generates deterministic synthetic train / validation / evaluation datasets"
    input_schema = SynthInput
    output_schema = SynthOutput

    def execute(self, config: RunConfig, params: SynthInput) -> SynthOutput:
        layout = RunLayout(config)
        target = layout.data if params.data_dir is None else Path(params.data_dir)
        sizes = split_sizes(config)

        output = SynthOutput()
        synth_configs = {}
        offset = 0
        # user indices run on across splits so ids never collide
        for split in Split:
            n_users = sizes[split]
            if split in params.splits:
                synth = config.synth_config(split, n_users, offset)
                dataset = generate_synthetic(synth)
                path = save_dataset(dataset, target / f"{split.value}.json")
                output.written.append(str(path))
                output.users[split.value] = n_users
                synth_configs[split.value] = synth.model_dump(mode="json")
            offset += n_users

        manifest = target / "synth_manifest.json"
        manifest.write_text(json.dumps(synth_configs, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        output.written.append(str(manifest))
        logger.info(f"Synthesized {output.users} into {target}")
        return output
