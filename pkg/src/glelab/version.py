"""Centralized version information for glelab."""

# Package version - follows semantic versioning (MAJOR.MINOR.PATCH)
__version__ = "0.1.0"
