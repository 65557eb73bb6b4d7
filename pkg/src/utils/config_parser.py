"""
Benchmark configuration files.

One `key = value` pair per line; `#` starts a comment. Keys not listed in
CONFIG_KEYS are rejected, and every error names the offending line.
"""
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from pydantic import ValidationError

from ..core.errors import ConfigError
from ..state import CycleConfig, RunConfig, SetupConfig, SolveConfig

logger = logging.getLogger(__name__)

CONFIG_KEYS = {
    "aggregation_exponent": "setup",
    "coarse_size": "setup",
    "max_levels": "setup",
    "smooth_vector": "setup",
    "pre_sweeps": "cycle",
    "post_sweeps": "cycle",
    "coarsest_sweeps": "cycle",
    "relaxation_weight": "cycle",
    "rtol": "solve",
    "max_iters": "solve",
    "precflag": "solve",
}

_SECTIONS = {"setup": SetupConfig, "cycle": CycleConfig, "solve": SolveConfig}


def read_config_lines(text: str) -> Dict[str, Tuple[str, int]]:
    """key -> (raw value, line number)."""
    entries: Dict[str, Tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if not value:
            raise ConfigError(f"missing value for {key!r}", lineno)
        if key in entries:
            raise ConfigError(f"{key!r} already set on line {entries[key][1]}", lineno)
        entries[key] = (value, lineno)
    return entries


def _build_section(name: str, entries: Dict[str, Tuple[str, int]], overrides: Dict[str, Any]):
    values: Dict[str, Any] = {k: v for k, (v, _) in entries.items() if CONFIG_KEYS[k] == name}
    values.update({k: v for k, v in overrides.items() if CONFIG_KEYS.get(k) == name})
    try:
        return _SECTIONS[name](**values)
    except ValidationError as exc:
        err = exc.errors()[0]
        field = str(err["loc"][0]) if err["loc"] else ""
        line = entries[field][1] if field in entries and field not in overrides else None
        raise ConfigError(f"{field}: {err['msg']}", line) from exc


def parse_config(path: Optional[Union[str, Path]] = None, **overrides: Any) -> RunConfig:
    """
    RunConfig from an optional file plus overrides.

    Overrides are either solver keys (as in the file; they win over it) or
    RunConfig fields such as nd, matrix_path, ranks, seed. None values are
    ignored so CLI defaults can be passed straight through.
    """
    overrides = {k: v for k, v in overrides.items() if v is not None}
    entries: Dict[str, Tuple[str, int]] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"configuration file {path} not found")
        entries = read_config_lines(path.read_text())
        logger.debug("read %d keys from %s", len(entries), path)

    sections = {name: _build_section(name, entries, overrides) for name in _SECTIONS}
    run_fields = {k: v for k, v in overrides.items() if k not in CONFIG_KEYS}
    try:
        return RunConfig(**sections, **run_fields)
    except ValidationError as exc:
        err = exc.errors()[0]
        where = ".".join(str(p) for p in err["loc"]) or "config"
        raise ConfigError(f"{where}: {err['msg']}") from exc
