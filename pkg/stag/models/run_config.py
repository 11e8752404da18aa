"""Run configuration: one pydantic section per dotted key prefix."""

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .noise import NoiseFamily
from .vi import Granularity, vi_defaults

# Training-split size per dataset; anything else uses 140
DEFAULT_TRAIN_SIZES = {"cora": 140, "citeseer": 120}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class ModelSection(_Section):
    kind: Literal["gcn", "sage_mean", "gin"] = "gcn"
    depth: int = 2
    hidden: int = 128

    @field_validator("depth", "hidden")
    @classmethod
    def _positive(cls, v):
        if v < 1:
            raise ValueError("must be >= 1")
        return v


class NoiseSection(_Section):
    preset: Optional[Literal["dropout", "fastgcn", "dropedge", "gdc", "stag_full"]] = None
    family: Optional[NoiseFamily] = None
    p_drop: Optional[float] = None
    mu: Optional[float] = None
    sigma: Optional[float] = None
    a: Optional[float] = None
    b: Optional[float] = None
    # None keeps the preset's own setting
    normalize_degree: Optional[bool] = None
    resample_per_layer: bool = True
    mask_self_loops: bool = True


class VISection(_Section):
    granularity: Granularity = Granularity.per_edge_per_channel
    mu0: Optional[float] = None
    log_sigma0: Optional[float] = None
    sigma_prior: Optional[float] = None
    independent_draws: bool = False
    kl_scale: float = 1.0
    mc_samples: int = 1
    amortizer_hidden: int = 32


class TrainSection(_Section):
    lr: float = 5e-4
    l2: float = 5e-4
    l2_params: list[str] = ["layer0.weight"]
    epochs: int = 2000
    # 0 disables early stopping
    patience: int = 100
    mc_samples: int = 32
    val_samples: int = 1
    loss: Literal["cross_entropy", "poisson_nll", "mse"] = "cross_entropy"
    runs: int = 5
    seed: int = 0
    log_every: int = 100

    @field_validator("l2_params", mode="before")
    @classmethod
    def _split(cls, v):
        if isinstance(v, str):
            return [s.strip() for s in v.split(",") if s.strip()]
        return v

    @field_validator("lr")
    @classmethod
    def _positive_rate(cls, v):
        if v <= 0:
            raise ValueError("learning rate must be positive")
        return v

    @model_validator(mode="after")
    def _patience_fits(self):
        if self.patience > self.epochs:
            raise ValueError(f"patience ({self.patience}) exceeds epochs ({self.epochs})")
        if self.epochs < 1 or self.runs < 1 or self.mc_samples < 1:
            raise ValueError("epochs, runs and mc_samples must be >= 1")
        return self


class DataSection(_Section):
    dataset: str = "cora"
    n_train: Optional[int] = None
    n_val: int = 500
    n_test: int = 1000
    split_policy: Literal["planetoid_like", "random"] = "planetoid_like"
    row_normalize: bool = True


class RunConfig(_Section):
    model: ModelSection = Field(default_factory=ModelSection)
    noise: NoiseSection = Field(default_factory=NoiseSection)
    vi: VISection = Field(default_factory=VISection)
    train: TrainSection = Field(default_factory=TrainSection)
    data: DataSection = Field(default_factory=DataSection)

    @model_validator(mode="after")
    def _resolve_defaults(self):
        mu0, log_sigma0, sigma_prior = vi_defaults(self.data.dataset, self.vi.granularity)
        if self.vi.mu0 is None:
            self.vi.mu0 = mu0
        if self.vi.log_sigma0 is None:
            self.vi.log_sigma0 = log_sigma0
        if self.vi.sigma_prior is None:
            self.vi.sigma_prior = sigma_prior
        if self.data.n_train is None:
            self.data.n_train = DEFAULT_TRAIN_SIZES.get(self.data.dataset.lower(), 140)
        return self

    def manifest(self) -> list[str]:
        """Every resolved key as ``section.key=value``, readable by load_run_config."""
        lines = []
        for section, values in self.model_dump(mode="json").items():
            for key, value in values.items():
                if value is None:
                    text = ""
                elif isinstance(value, bool):
                    text = str(value).lower()
                elif isinstance(value, list):
                    text = ",".join(str(v) for v in value)
                else:
                    text = str(value)
                lines.append(f"{section}.{key}={text}")
        return lines
