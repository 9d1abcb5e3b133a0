"""Linear and non-linear factor-augmented vector autoregressions."""

__version__ = "0.1.0"
