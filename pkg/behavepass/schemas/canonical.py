"""Wire models of the canonical JSON dataset layout, used to validate input files."""

from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from behavepass.schemas.dataset import Split


class CanonScreen(BaseModel):
    width: int = Field(..., gt=0)
    height: int = Field(..., gt=0)


class CanonSession(BaseModel):
    session: int = Field(..., ge=1, le=4, description="Session number")
    device: str
    performed_by: str
    screen: Optional[CanonScreen] = None
    tasks: Dict[str, Dict[str, Dict[str, List[float]]]]

    @model_validator(mode="after")
    def _columns_have_timestamps(self) -> "CanonSession":
        for task, channels in self.tasks.items():
            for channel, columns in channels.items():
                if "t" not in columns:
                    raise ValueError(f"series {task}/{channel} has no 't' column")
                lengths = {name: len(values) for name, values in columns.items()}
                if len(set(lengths.values())) > 1:
                    raise ValueError(f"series {task}/{channel} has columns of unequal length {lengths}")
        return self


class CanonUser(BaseModel):
    id: str
    device: str
    sessions: List[CanonSession]


class CanonDataset(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_name: str = Field(..., alias="schema")
    split: Split
    users: List[CanonUser]
