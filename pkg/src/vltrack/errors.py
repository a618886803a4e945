"""Shared exception hierarchy.

Every error the engine can raise derives from EngineError so the pipeline
can abort a sequence cleanly (flush partial outputs, write an error record)
without swallowing unrelated bugs.
"""


class EngineError(Exception):
    """Base class for all engine-raised errors."""


class ConfigError(EngineError):
    """Invalid configuration value or inconsistent mode selection."""
