"""Robust NER from noisy text: corruption channels, label projection,
sparse/dense/self retrieval, and two-view encoder+CRF training."""

__version__ = "0.1.0"
