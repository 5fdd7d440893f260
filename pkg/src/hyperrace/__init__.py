"""2D autonomous racing simulator, safe-region convexification and MPC."""

__version__ = "0.1.0"
