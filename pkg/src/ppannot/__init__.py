"""Audio-conditioned phonemic and prosodic label annotation toolkit."""

__version__ = "0.1.0"
