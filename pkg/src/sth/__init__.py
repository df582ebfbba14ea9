"""Self-taught hashing: learned binary codes for fast document similarity search."""

__version__ = "0.1.0"
