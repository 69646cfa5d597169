"""Dynamic differential privacy for federated learning over wireless uplinks."""

__version__ = "0.1.0"
