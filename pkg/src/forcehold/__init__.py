"""forcehold: dual-arm planning to keep a board stable under changing external forces."""

__version__ = "0.1.0"
