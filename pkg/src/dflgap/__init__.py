"""Laboratory for the gap between two-stage and end-to-end decision learning."""

__version__ = "0.1.0"
