"""Transfer learning for graphon estimation across graphs of different sizes."""

__version__ = "0.1.0"
