"""Byzantine-robust federated learning via multi-dimensional Huber loss minimization."""

__version__ = "0.1.0"
