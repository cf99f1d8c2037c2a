"""Exception types shared across the simulator."""


class ConfigurationError(ValueError):
    """Invalid scenario or experiment configuration."""


class TopologyError(RuntimeError):
    """Constellation or link-graph structure violates a requirement."""


class InputError(ValueError):
    """Operation input outside its domain (non-finite costs, mismatched shapes, ...)."""


class TrainingError(RuntimeError):
    """Numerical failure during local training (overflow, divergence)."""
