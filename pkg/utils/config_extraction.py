# utils/config_extraction.py
import logging
from typing import Any, Dict, Optional

from fastapi import UploadFile
from pydantic import ValidationError

from config import get_default_seed, get_default_trials
from exceptions import ScenarioConfigError
from models.scenario import Scenario
from utils.query_utils import try_convert_numeric

logger = logging.getLogger(__name__)

LIST_KEYS = {"snr_grid_db", "t_grid", "schemes"}
SCENARIO_KEYS = set(Scenario.model_fields)


def parse_scenario_text(
    text: str, seed_override: Optional[int] = None, trials_override: Optional[int] = None
) -> Scenario:
    """
    Parses a flat ``key = value`` scenario file.

    Lines starting with ``#`` are comments; list values are comma separated.

    Args:
        text: File contents
        seed_override: Replaces ``master_seed`` when given
        trials_override: Replaces ``trials`` when given

    Returns:
        Validated Scenario
    """
    values: Dict[str, Any] = {"trials": get_default_trials(), "master_seed": get_default_seed()}

    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioConfigError(f"line {line_no}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCENARIO_KEYS:
            raise ScenarioConfigError(f"line {line_no}: unknown key {key!r}")
        if key in LIST_KEYS:
            values[key] = [try_convert_numeric(item.strip()) for item in value.split(",") if item.strip()]
        else:
            values[key] = try_convert_numeric(value)

    if seed_override is not None:
        values["master_seed"] = seed_override
    if trials_override is not None:
        values["trials"] = trials_override

    try:
        scenario = Scenario(**values)
    except ValidationError as exc:
        raise ScenarioConfigError(f"invalid scenario: {exc}") from exc
    logger.debug("parsed scenario: %s", scenario.model_dump())
    return scenario


def load_scenario_file(path, seed_override: Optional[int] = None, trials_override: Optional[int] = None) -> Scenario:
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ScenarioConfigError(f"cannot read scenario file {path}: {exc}") from exc
    return parse_scenario_text(text, seed_override, trials_override)


async def extract_scenario_from_upload(file: UploadFile) -> Scenario:
    contents = await file.read()
    try:
        text = contents.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ScenarioConfigError(f"scenario file {file.filename!r} is not UTF-8 text") from exc
    return parse_scenario_text(text)
