from .configuration import RunConfig, DEFAULTS
