"""Run configuration files.

The format is TOML restricted to top-level keys::

    model_id   = "sm"                         # label written to the CSV
    zeros      = [[0.9937, 1], [0.7286, 2]]   # factors 1 - c z^-d, as [c, d]
    poles      = [0.9999]                     # factors 1 - p z^-1
    gamma      = [0.05, 0.15]                 # number or list, radians
    modulation = ["qam4", "qam16"]            # string or list
    snr_db     = [0, 3, 6]                    # number or list

    # optional, with defaults
    n = 200000
    burn_in = 1000
    batch = 1000
    np_blind = 4096
    trackers = ["kalman", "particle"]         # or "particle:8192"
    quad_nodes = 32
    seed = 0
    repeats = 1
    workers = 1
    output = "results.csv"
    record_time = false

``zeros = []`` together with ``poles = []`` selects ``H(z) = 1``.
A file must define the five model keys (``zeros``, ``poles``, ``gamma``,
``modulation``, ``snr_db``). Without a file the packaged default is used.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass
from importlib import resources

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .exceptions import ConfigError
from .harness import SweepConfig

REQUIRED = ("zeros", "poles", "gamma", "modulation", "snr_db")
TYPES = {
    "model_id": str, "zeros": list, "poles": list, "gamma": (int, float, list),
    "modulation": (str, list), "snr_db": (int, float, list), "n": int,
    "burn_in": int, "batch": int, "np_blind": int, "trackers": (str, list),
    "quad_nodes": int, "seed": int, "repeats": int, "workers": int,
    "output": str, "record_time": bool,
}
# config key -> SweepConfig field
RENAME = {"gamma": "gammas", "modulation": "modulations", "seed": "master_seed"}
CLI_ONLY = ("workers", "output", "record_time")
DEFAULT_FILE = "sm_default.toml"

__all__ = ["CliConfig", "load_config", "parse_config", "default_config_text"]


@dataclass(frozen=True)
class CliConfig:
    """A validated sweep plus the front-end settings."""

    sweep: SweepConfig
    output: str | None = None
    workers: int = 1
    record_time: bool = False
    verbose: int = 0


def default_config_text() -> str:
    return resources.files("pnbounds").joinpath("data", DEFAULT_FILE).read_text()


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse and type-check a config document; returns the raw key dict."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    for key, value in raw.items():
        if key not in TYPES:
            raise ConfigError(f"{source}: unknown field '{key}'")
        if isinstance(value, bool) and TYPES[key] is not bool:
            raise ConfigError(f"{source}: field '{key}' has wrong type bool")
        if not isinstance(value, TYPES[key]):
            raise ConfigError(f"{source}: field '{key}' has wrong type "
                              f"{type(value).__name__}")
    missing = [k for k in REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"{source}: missing required field(s): {', '.join(missing)}")
    return raw


def _poles(value, source):
    out = []
    for p in value:
        if isinstance(p, list):
            # [p, 1] is accepted for symmetry with zeros
            if len(p) != 2 or p[1] != 1:
                raise ConfigError(f"{source}: poles must be numbers or [p, 1] pairs")
            p = p[0]
        out.append(float(p))
    return tuple(out)


def _zeros(value, source):
    out = []
    for z in value:
        if not (isinstance(z, list) and len(z) == 2):
            raise ConfigError(f"{source}: each zero must be a [c, d] pair, got {z!r}")
        out.append((float(z[0]), int(z[1])))
    return tuple(out)


def build_cli_config(raw: dict, overrides: dict | None = None, source: str = "<config>",
                     verbose: int = 0) -> CliConfig:
    """Merge command-line overrides (None means unset) into ``raw`` and validate."""
    merged = dict(raw)
    for k, v in (overrides or {}).items():
        if v is not None:
            merged[k] = v
    kwargs = {}
    for key, value in merged.items():
        if key in CLI_ONLY:
            continue
        if key == "zeros":
            value = _zeros(value, source)
        elif key == "poles":
            value = _poles(value, source)
        kwargs[RENAME.get(key, key)] = value
    try:
        sweep = SweepConfig(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None
    workers = int(merged.get("workers", 1))
    if workers < 1:
        raise ConfigError(f"{source}: workers must be >= 1")
    return CliConfig(sweep, merged.get("output"), workers,
                     bool(merged.get("record_time", False)), verbose)


def load_config(path=None, overrides: dict | None = None, verbose: int = 0) -> CliConfig:
    """Read ``path`` (or the packaged default) and apply overrides."""
    if path is None:
        text, source = default_config_text(), DEFAULT_FILE
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        source = str(path)
    return build_cli_config(parse_config(text, source), overrides, source, verbose)
