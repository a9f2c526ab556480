import json
import re
from importlib import resources
from textwrap import dedent
from typing import Optional, Tuple

import jsonschema
import yaml

from ...exceptions import ConfigurationException


def load_json_configuration(path) -> Tuple[dict, str]:
    """Reads and parses a JSON run configuration, returning the parsed object and the raw text"""
    try:
        with open(path, encoding="utf-8") as f:
            raw = f.read()
    except OSError as e:
        raise ConfigurationException(f"Cannot read configuration {path}: {e.strerror}")

    try:
        parsed = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ConfigurationException(f"{e.msg} (column {e.colno})", line=e.lineno)

    if not isinstance(parsed, dict):
        raise ConfigurationException("The configuration must be a JSON object", line=1)
    return parsed, raw


def load_schema() -> dict:
    schema_text = resources.files("hblab.support").joinpath("config.schema.yml").read_text(encoding="utf-8")
    return yaml.safe_load(schema_text)


def validate_configuration_schema(parsed_config, raw: Optional[str] = None):
    try:
        jsonschema.validate(parsed_config, load_schema())
    except jsonschema.ValidationError as e:
        # Do not use f-strings, as they will break dedent if `message` contains newlines
        error_message = (
            dedent(
                """
                Got the following error at path {path}:
                {message}
                """
            )
            .format(path=error_path(e), message=e.message)
            .strip()
        )
        line = locate_line(raw, list(e.absolute_path)) if raw is not None else None
        raise ConfigurationException(error_message, path=error_path(e), line=line)


# pip release of jsonschema does not yet include this commit
# which implements this function directly as a property of the error
# https://github.com/Julian/jsonschema/commit/1f37cb81c141df6a99bacc117b1549cc6702fa79
def error_path(err: jsonschema.ValidationError):
    path = "$"
    for elem in err.absolute_path:
        if isinstance(elem, int):
            path += "[" + str(elem) + "]"
        else:
            path += "." + elem
    return path


def locate_line(raw: str, path) -> Optional[int]:
    """Best-effort line number of the innermost object key of a JSON path in the raw text"""
    keys = [elem for elem in path if isinstance(elem, str)]
    if not keys:
        return 1
    offset = 0
    for key in keys:
        match = re.compile(r'"' + re.escape(key) + r'"\s*:').search(raw, offset)
        if match is None:
            return None
        offset = match.start()
    return raw.count("\n", 0, offset) + 1
