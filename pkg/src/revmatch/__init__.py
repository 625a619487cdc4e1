"""Factor-aware paper-reviewer matching with an instruction-conditioned encoder."""

__version__ = "0.1.0"
