"""densimpute: probabilistic kNN x KDE imputation and benchmark harness."""
__version__ = "1.0.0"
