"""Value of information of vibration-based structural health monitoring for bridges."""

__version__ = "0.1.0"
