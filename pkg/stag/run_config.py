"""Plain-text run configuration.

One ``section.key = value`` per line; blank lines and lines starting with ``#``
are ignored; an empty value means "unset". CLI flags arrive as overrides in the
same dotted form.
"""

import logging
from pathlib import Path

from pydantic import ValidationError

from .errors import ConfigError
from .models.noise import NoiseFamily, NoiseSpec
from .models.run_config import RunConfig
from .services.noise import preset_spec

logger = logging.getLogger(__name__)

SECTIONS = tuple(RunConfig.model_fields)


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str | None]:
    values: dict[str, str | None] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_no}: expected key = value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value or None
    return values


def _nest(flat: dict[str, str | None]) -> dict[str, dict]:
    nested: dict[str, dict] = {}
    for key, value in flat.items():
        section, _, field = key.partition(".")
        if section not in SECTIONS or not field:
            raise ConfigError(f"unknown key: {key}")
        if value is not None:
            nested.setdefault(section, {})[field] = value
    return nested


def _wrap(err: ValidationError) -> ConfigError:
    first = err.errors()[0]
    loc = ".".join(str(p) for p in first["loc"])
    if first["type"] == "extra_forbidden":
        return ConfigError(f"unknown key: {loc}")
    message = first["msg"].removeprefix("Value error, ")
    return ConfigError(f"{loc}: {message}" if loc else message)


def resolve_config(flat: dict[str, str | None]) -> RunConfig:
    try:
        cfg = RunConfig.model_validate(_nest(flat))
    except ValidationError as e:
        raise _wrap(e) from e
    noise_spec(cfg)
    return cfg


def load_run_config(path: str | Path | None = None, overrides: dict[str, str | None] | None = None) -> RunConfig:
    """Read ``path`` (optional), apply ``overrides`` and validate the result."""
    flat: dict[str, str | None] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        flat.update(parse_config_text(path.read_text(), str(path)))
    flat.update(overrides or {})
    return resolve_config(flat)


def noise_spec(cfg: RunConfig) -> NoiseSpec:
    """NoiseSpec described by the ``noise.`` section; errors name the offending key."""
    n = cfg.noise
    extra = {"resample_per_layer": n.resample_per_layer, "mask_self_loops": n.mask_self_loops}
    if n.normalize_degree is not None:
        extra["normalize_degree"] = n.normalize_degree
    try:
        if n.preset is not None:
            return preset_spec(n.preset, n.family, n.p_drop, n.mu, n.sigma, n.a, n.b, **extra)
        return NoiseSpec(family=n.family or NoiseFamily.delta, p_drop=n.p_drop, mu=n.mu, sigma=n.sigma,
                         a=n.a, b=n.b, **extra)
    except ValidationError as e:
        raise ConfigError(e.errors()[0]["msg"].removeprefix("Value error, ")) from e
    except ValueError as e:
        raise ConfigError(f"noise.preset: {e}") from e


def write_manifest(cfg: RunConfig, path: str | Path):
    Path(path).write_text("\n".join(cfg.manifest()) + "\n")


def log_manifest(cfg: RunConfig):
    for line in cfg.manifest():
        logger.info(f"  {line}")
