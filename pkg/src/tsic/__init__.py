"""Edge cluster simulator with joint task scheduling and image caching policies."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
