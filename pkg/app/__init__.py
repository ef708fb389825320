from .config import Settings, get_settings
from .graph.workflow import VerificationWorkflow

__version__ = "0.1.0"
__all__ = ["Settings", "get_settings", "VerificationWorkflow"]
