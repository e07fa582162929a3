"""Sequential change-point detection for composite pre- and post-change hypotheses."""

__version__ = "0.1.0"
