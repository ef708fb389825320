from .configuration import Configuration
from .workflow import VerificationWorkflow

__all__ = ["Configuration", "VerificationWorkflow"]
