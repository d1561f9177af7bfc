"""Time-evolved quantum-selected CI inside a two-layer ONIOM workflow."""

__version__ = "0.1.0"
