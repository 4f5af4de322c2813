from .schemas import TOOL_VERSION

__version__ = TOOL_VERSION

__all__ = ["__version__"]
