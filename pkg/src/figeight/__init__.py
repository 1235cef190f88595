"""Figure-eight target trajectory reconstruction and interception planning."""

__version__ = "0.1.0"
