"""Speaker-listener communication games with mixed supervised/self-play training."""

__version__ = "0.1.0"
