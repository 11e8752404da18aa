from enum import Enum


class Granularity(str, Enum):
    scalar = "scalar"
    per_channel = "per_channel"
    per_edge = "per_edge"
    per_edge_per_channel = "per_edge_per_channel"

    @property
    def amortized(self) -> bool:
        return self in (Granularity.per_edge, Granularity.per_edge_per_channel)

    @property
    def per_channel_values(self) -> bool:
        return self in (Granularity.per_channel, Granularity.per_edge_per_channel)


# (mu0, log_sigma0, sigma_prior) tuned per dataset and granularity.
VI_DEFAULTS: dict[tuple[str, Granularity], tuple[float, float, float]] = {
    ("cora", Granularity.scalar): (0.5, 1.0, 0.2),
    ("cora", Granularity.per_channel): (0.25, 2.0, 1.0),
    ("cora", Granularity.per_edge): (0.5, 1.5, 0.5),
    ("cora", Granularity.per_edge_per_channel): (0.5, 1.0, 0.5),
    ("citeseer", Granularity.scalar): (0.5, 0.0, 0.5),
    ("citeseer", Granularity.per_channel): (0.25, 2.0, 0.5),
    ("citeseer", Granularity.per_edge): (0.5, 1.5, 0.5),
    ("citeseer", Granularity.per_edge_per_channel): (0.5, 1.0, 1.0),
    ("esol", Granularity.scalar): (0.5, -1.0, 0.1),
    ("esol", Granularity.per_channel): (1.0, 0.0, 0.5),
    ("esol", Granularity.per_edge): (0.1, 0.0, 1.0),
    ("esol", Granularity.per_edge_per_channel): (0.1, -1.0, 0.1),
    ("freesolv", Granularity.scalar): (0.1, -1.0, 1.0),
    ("freesolv", Granularity.per_channel): (0.1, 0.0, 0.5),
    ("freesolv", Granularity.per_edge): (0.5, -2.0, 1.0),
    ("freesolv", Granularity.per_edge_per_channel): (1.0, 0.0, 0.1),
}

# Used for datasets without a tuned row (synthetic, toy graphs)
FALLBACK_VI_DEFAULTS = (1.0, -1.0, 0.5)


def vi_defaults(dataset: str, granularity: Granularity | str) -> tuple[float, float, float]:
    return VI_DEFAULTS.get((dataset.lower(), Granularity(granularity)), FALLBACK_VI_DEFAULTS)
