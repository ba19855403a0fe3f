"""Multi-agent common knowledge reinforcement learning."""

__version__ = "0.1.0"
