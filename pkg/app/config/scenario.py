from pathlib import Path
from typing import Any, Dict, Optional, Union

import structlog
import yaml
from pydantic import ValidationError

from app.core.exceptions import ConfigurationError
from app.models.scenario import ScenarioConfig
from app.utils.helpers import content_digest

logger = structlog.get_logger()


def set_dotted(data: Dict[str, Any], key: str, value: Any) -> None:
    """Set ``a.b.c`` in a nested dict, creating intermediate levels"""
    parts = key.split(".")
    current = data
    for part in parts[:-1]:
        nxt = current.get(part)
        if not isinstance(nxt, dict):
            nxt = {}
            current[part] = nxt
        current = nxt
    current[parts[-1]] = value


def parse_scenario(raw: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None) -> ScenarioConfig:
    """Validate a raw scenario mapping after applying dotted-key overrides"""
    data = dict(raw or {})
    for key, value in (overrides or {}).items():
        if value is not None:
            set_dotted(data, key, value)
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigurationError(f"Invalid scenario: {problems}") from e


def load_scenario(
    path: Union[str, Path],
    overrides: Optional[Dict[str, Any]] = None,
) -> ScenarioConfig:
    """Load a YAML scenario file into a validated ScenarioConfig"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"Cannot read scenario file {path}: {e}") from e

    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigurationError(f"Malformed YAML in {path}: {e}") from e
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigurationError(f"Scenario file {path} must contain a mapping at top level")

    cfg = parse_scenario(raw, overrides)
    logger.info("Scenario loaded", path=str(path), name=cfg.name, digest=scenario_digest(cfg))
    return cfg


def scenario_digest(cfg: ScenarioConfig) -> str:
    return content_digest(cfg.model_dump_json().encode("utf-8"))
