"""Predict whether a paper lands in the top-q most cited of its journal cohort from text alone."""

__version__ = "0.1.0"
