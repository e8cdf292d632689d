"""DevTools-protocol session broker, reference monitor, and mock-browser attack harness."""

__version__ = "0.1.0"
