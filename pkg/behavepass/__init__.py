"""BehavePass benchmark toolkit: mobile behavioral-biometric verification baseline."""

__version__ = "1.0.0"
