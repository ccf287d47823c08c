__version__ = "0.1.0"

# Re-export from errors
from .errors import (
    DensePredError,
    ConfigurationError,
    InputError,
    FormatError,
    TrainingError,
    NotRegisteredError,
)

# Re-export from types
from .project_types import Task, Mode, Modality, PredictorProtocol

__all__ = [
    "__version__",
    # Errors
    "DensePredError",
    "ConfigurationError",
    "InputError",
    "FormatError",
    "TrainingError",
    "NotRegisteredError",
    # Types
    "Task",
    "Mode",
    "Modality",
    "PredictorProtocol",
]
