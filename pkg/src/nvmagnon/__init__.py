"""NV-center / Kerr-magnon tripartite coupling simulator."""

__version__ = "0.1.0"
