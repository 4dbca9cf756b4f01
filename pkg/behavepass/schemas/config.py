"""Configuration models and the canonical / desk presets."""

from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from behavepass.schemas.dataset import ModalityId, Split, Task


class Preset(str, Enum):
    CANONICAL = "canonical"
    DESK = "desk"


class Scenario(str, Enum):
    RANDOM = "random"
    SKILLED = "skilled"
    MIXED = "mixed"


class SynthConfig(BaseModel):
    """Parameters of the synthetic dataset generator"""

    model_config = ConfigDict(frozen=True)

    split: Split = Field(Split.TRAIN, description="Split written into the generated dataset")
    n_users: int = Field(8, description="Number of owners")
    user_offset: int = Field(0, ge=0, description="Index of the first owner, keeps ids unique across splits")
    sessions_per_user: int = Field(4, description="Genuine sessions per owner")
    samples_per_task: int = Field(1000, ge=1, description="Sensor samples per task at 200 Hz")
    touch_events_per_task: int = Field(300, ge=1, description="Touch events per touch task")
    keystrokes_per_task: int = Field(200, ge=1, description="Key presses in the keystroke task")
    rng_seed: int = Field(0, ge=0, description="Root seed of every random stream")
    ar_radius_range: Tuple[float, float] = Field((0.5, 0.95), description="Pole radius of the per-axis AR(2) signature")
    ar_angle_range: Tuple[float, float] = Field((0.05, 0.6), description="Pole angle of the AR(2) signature, in units of pi")
    frequency_range: Tuple[float, float] = Field((0.5, 12.0), description="Signature oscillation frequencies in Hz")
    device_gain_range: Tuple[float, float] = Field((0.98, 1.02), description="Uniform range of per-axis device gains")
    device_offset_range: Tuple[float, float] = Field((-0.1, 0.1), description="Uniform range of per-axis device offsets")
    device_resonance_range: Tuple[float, float] = Field(
        (0.8, 1.6), description="Per-axis amplitude of the device's resonance tone, in units of the sensor's signal scale"
    )
    device_resonance_hz_range: Tuple[float, float] = Field(
        (15.0, 45.0), description="Uniform range of the device resonance frequency in Hz"
    )
    noise_std: float = Field(0.05, ge=0.0, description="Std of additive white sensor noise")
    impostor_imitation: float = Field(0.3, ge=0.0, le=1.0, description="How far skilled impostors imitate the owner's touch behaviour")

    @property
    def device_effects(self) -> bool:
        """False when gain 1 and offset 0 make every device identical; the resonance is then off too."""
        return tuple(self.device_gain_range) != (1.0, 1.0) or tuple(self.device_offset_range) != (0.0, 0.0)

    @field_validator(
        "ar_radius_range",
        "ar_angle_range",
        "frequency_range",
        "device_gain_range",
        "device_offset_range",
        "device_resonance_range",
        "device_resonance_hz_range",
    )
    @classmethod
    def _ordered_range(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        low, high = value
        if low > high:
            raise ValueError(f"empty range [{low}, {high}]")
        return value

    @model_validator(mode="after")
    def _check(self) -> "SynthConfig":
        if self.n_users < 2:
            raise ValueError(f"n_users must be at least 2, got {self.n_users}")
        if not 1 <= self.sessions_per_user <= 4:
            raise ValueError(f"sessions_per_user must be in 1..4, got {self.sessions_per_user}")
        if self.device_gain_range[0] <= 0:
            raise ValueError(f"device gains must be strictly positive, got {self.device_gain_range}")
        if not 0 < self.ar_radius_range[1] < 1:
            raise ValueError("AR pole radius must stay inside the unit circle")
        if self.device_resonance_range[0] < 0:
            raise ValueError(f"resonance amplitudes must be non-negative, got {self.device_resonance_range}")
        low, high = self.device_resonance_hz_range
        if low <= 0 or high >= 100.0:
            raise ValueError(f"resonance frequencies must lie in (0, 100) Hz at 200 Hz sampling, got {self.device_resonance_hz_range}")
        return self


class ModelSpec(BaseModel):
    """Shape of one per-modality embedding network"""

    model_config = ConfigDict(frozen=True)

    input_dim: int = Field(..., description="Feature dimension: 12 sensors, 8 touch, 2 keystroke")
    hidden_units: int = Field(64, ge=1)
    layers: int = Field(2, ge=1)
    embedding_dim: int = Field(64, ge=1)
    dropout_rate: float = Field(0.5, ge=0.0, lt=1.0)
    recurrent_dropout_rate: float = Field(0.5, ge=0.0, lt=1.0)
    bn_momentum: float = Field(0.1, gt=0.0, le=1.0, description="Weight of the batch statistics in the running averages")
    bn_epsilon: float = Field(1e-5, gt=0.0)

    @property
    def projects(self) -> bool:
        """Whether a linear output layer maps the last hidden state to E dims."""
        return self.embedding_dim != self.hidden_units


class Hyper(BaseModel):
    """Training hyper-parameters"""

    model_config = ConfigDict(frozen=True)

    epochs: int = Field(150, ge=1)
    batch_size: int = Field(512, ge=1)
    learning_rate: float = Field(0.05, gt=0.0)
    beta1: float = Field(0.9, gt=0.0, lt=1.0)
    beta2: float = Field(0.999, gt=0.0, lt=1.0)
    epsilon: float = Field(1e-8, gt=0.0)
    margin: float = Field(1.5, gt=0.0, description="Triplet margin alpha")
    windows_per_session: int = Field(50, ge=1, description="Training windows drawn per session and epoch")
    augment: bool = Field(False, description="Device-noise augmentation of sensor windows")
    augment_gain_range: Tuple[float, float] = Field((0.98, 1.02))
    augment_offset_std: float = Field(0.05, ge=0.0)


CANONICAL_CONSTANTS: Dict[str, float] = {
    "hidden_units": 64,
    "embedding_dim": 64,
    "epochs": 150,
    "batch_size": 512,
    "learning_rate": 0.05,
    "beta1": 0.9,
    "beta2": 0.999,
    "epsilon": 1e-8,
    "margin": 1.5,
    "cap": 50,
}

PRESETS: Dict[Preset, Dict[str, float]] = {
    Preset.CANONICAL: {**CANONICAL_CONSTANTS, "windows_per_session": 50, "users": 51},
    Preset.DESK: {
        "hidden_units": 16,
        "embedding_dim": 16,
        "epochs": 30,
        "batch_size": 64,
        "learning_rate": 0.01,
        "beta1": 0.9,
        "beta2": 0.999,
        "epsilon": 1e-8,
        "margin": 1.5,
        "cap": 50,
        "windows_per_session": 16,
        "users": 8,
    },
}


class RunConfig(BaseModel):
    """Everything a pipeline run depends on"""

    model_config = ConfigDict(frozen=True, use_enum_values=False)

    preset: Preset = Field(Preset.DESK)
    seed: int = Field(0, ge=0)
    input_dir: Optional[str] = Field(None, description="Directory with train/validation/evaluation JSON files")
    output_dir: str = Field("out")

    # synthetic data
    users: int = Field(8, ge=2, description="Synthetic training users")
    val_users: Optional[int] = Field(None, ge=2)
    eval_users: Optional[int] = Field(None, ge=2)
    samples_per_task: int = Field(1000, ge=1)
    touch_events_per_task: int = Field(300, ge=1)
    keystrokes_per_task: int = Field(200, ge=1)
    device_gain_range: Tuple[float, float] = (0.98, 1.02)
    device_offset_range: Tuple[float, float] = (-0.1, 0.1)
    device_resonance_range: Tuple[float, float] = (0.8, 1.6)
    device_resonance_hz_range: Tuple[float, float] = (15.0, 45.0)
    noise_std: float = Field(0.05, ge=0.0)
    impostor_imitation: float = Field(0.3, ge=0.0, le=1.0)

    # model and training
    hidden_units: int = Field(16, ge=1)
    embedding_dim: int = Field(16, ge=1)
    dropout_rate: float = Field(0.5, ge=0.0, lt=1.0)
    recurrent_dropout_rate: float = Field(0.5, ge=0.0, lt=1.0)
    epochs: int = Field(30, ge=1)
    batch_size: int = Field(64, ge=1)
    learning_rate: float = Field(0.01, gt=0.0)
    beta1: float = Field(0.9, gt=0.0, lt=1.0)
    beta2: float = Field(0.999, gt=0.0, lt=1.0)
    epsilon: float = Field(1e-8, gt=0.0)
    margin: float = Field(1.5, gt=0.0)
    windows_per_session: int = Field(16, ge=1)
    cap: int = Field(50, ge=1, description="Maximum scoring windows per session")

    # filters and flags
    tasks: List[Task] = Field(default_factory=lambda: list(Task))
    modalities: List[ModalityId] = Field(default_factory=lambda: list(ModalityId))
    augment: bool = False
    znorm: bool = False
    pool_enrolment: bool = True
    pairing: str = Field("rotation", pattern="^(rotation|shuffle)$")
    dump_features: bool = False
    force: bool = False

    def synth_config(self, split: Split, n_users: int, user_offset: int) -> SynthConfig:
        return SynthConfig(
            split=split,
            n_users=n_users,
            user_offset=user_offset,
            samples_per_task=self.samples_per_task,
            touch_events_per_task=self.touch_events_per_task,
            keystrokes_per_task=self.keystrokes_per_task,
            rng_seed=self.seed,
            device_gain_range=self.device_gain_range,
            device_offset_range=self.device_offset_range,
            device_resonance_range=self.device_resonance_range,
            device_resonance_hz_range=self.device_resonance_hz_range,
            noise_std=self.noise_std,
            impostor_imitation=self.impostor_imitation,
        )

    def model_spec(self, modality: ModalityId) -> ModelSpec:
        return ModelSpec(
            input_dim=modality.feature_dim,
            hidden_units=self.hidden_units,
            embedding_dim=self.embedding_dim,
            dropout_rate=self.dropout_rate,
            recurrent_dropout_rate=self.recurrent_dropout_rate,
        )

    def hyper(self) -> Hyper:
        return Hyper(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
            margin=self.margin,
            windows_per_session=self.windows_per_session,
            augment=self.augment,
        )
