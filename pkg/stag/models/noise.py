from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, model_validator


class NoiseFamily(str, Enum):
    delta = "delta"
    bernoulli = "bernoulli"
    normal = "normal"
    uniform = "uniform"


class Sharing(BaseModel):
    """Which axes of the (layer, channel, src, dst) mask tensor hold one shared draw.

    share_src_dst_as_edge: one draw per stored edge. With it off, one draw per
    row (destination) node covers the whole row, or with diag_only one draw per
    node covers every entry whose column is that node.
    """
    model_config = ConfigDict(frozen=True)

    share_layers: bool = False
    share_channels: bool = False
    share_src_dst_as_edge: bool = True
    diag_only: bool = False

    @model_validator(mode="after")
    def _exclusive(self):
        if self.diag_only and self.share_src_dst_as_edge:
            raise ValueError("diag_only and share_src_dst_as_edge are mutually exclusive")
        return self


class NoiseSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    family: NoiseFamily = NoiseFamily.delta
    # Bernoulli: probability that a weight is 0
    p_drop: Optional[float] = None
    mu: Optional[float] = None
    sigma: Optional[float] = None
    a: Optional[float] = None
    b: Optional[float] = None
    sharing: Sharing = Sharing()
    preset: Optional[str] = None
    normalize_degree: bool = False
    resample_per_layer: bool = True
    mask_self_loops: bool = True

    @model_validator(mode="after")
    def _check_family_params(self):
        required = {
            NoiseFamily.delta: (),
            NoiseFamily.bernoulli: ("p_drop",),
            NoiseFamily.normal: ("mu", "sigma"),
            NoiseFamily.uniform: ("a", "b"),
        }[self.family]
        for key in required:
            if getattr(self, key) is None:
                raise ValueError(f"noise.{key} is required for the {self.family.value} family")
        if self.p_drop is not None and not 0.0 <= self.p_drop <= 1.0:
            raise ValueError(f"noise.p_drop must lie in [0, 1], got {self.p_drop}")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError(f"noise.sigma must be >= 0, got {self.sigma}")
        if self.a is not None and self.b is not None and self.a > self.b:
            raise ValueError(f"noise.a must not exceed noise.b ({self.a} > {self.b})")
        return self

    @classmethod
    def delta(cls, **kwargs) -> "NoiseSpec":
        return cls(family=NoiseFamily.delta, **kwargs)

    @classmethod
    def bernoulli(cls, p_drop: float, **kwargs) -> "NoiseSpec":
        return cls(family=NoiseFamily.bernoulli, p_drop=p_drop, **kwargs)

    @classmethod
    def normal(cls, mu: float, sigma: float, **kwargs) -> "NoiseSpec":
        return cls(family=NoiseFamily.normal, mu=mu, sigma=sigma, **kwargs)

    @classmethod
    def uniform(cls, a: float, b: float, **kwargs) -> "NoiseSpec":
        return cls(family=NoiseFamily.uniform, a=a, b=b, **kwargs)

    @property
    def is_deterministic(self) -> bool:
        return self.family == NoiseFamily.delta

    def moments(self) -> tuple[float, float]:
        """(mean, variance) of one draw."""
        if self.family == NoiseFamily.delta:
            return 1.0, 0.0
        if self.family == NoiseFamily.bernoulli:
            keep = 1.0 - self.p_drop
            return keep, keep * self.p_drop
        if self.family == NoiseFamily.normal:
            return self.mu, self.sigma ** 2
        return 0.5 * (self.a + self.b), (self.b - self.a) ** 2 / 12.0

    def label(self) -> str:
        if self.family == NoiseFamily.delta:
            return "delta"
        if self.family == NoiseFamily.bernoulli:
            return f"bernoulli({self.p_drop:g})"
        if self.family == NoiseFamily.normal:
            return f"normal({self.mu:g},{self.sigma:g})"
        return f"uniform({self.a:g},{self.b:g})"
