"""Edge-cloud orchestrator, far-edge runtime model and simulator."""

__version__ = "0.1.0"
