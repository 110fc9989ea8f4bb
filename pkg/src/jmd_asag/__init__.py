"""Joint multi-domain short answer grading: k domain scorers plus one generic scorer."""

__version__ = "0.1.0"
