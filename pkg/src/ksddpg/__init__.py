"""Multi-agent traffic signal control with a shared knowledge container."""
from .comm import KnowledgeContainer, obtain_knowledge, update_knowledge
from .env import TrafficEnv
from .errors import (ConfigError, DimensionError, IllegalActionError, KsddpgError, NumericError,
                     SchemaError, UsageError, ValidationError, VersionError)
from .sim import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ConfigError", "DimensionError", "IllegalActionError", "KnowledgeContainer",
    "KsddpgError", "NumericError", "SchemaError", "TrafficEnv", "UsageError", "ValidationError",
    "VersionError", "obtain_knowledge", "update_knowledge",
]
