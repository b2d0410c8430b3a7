"""Mirror-augmented experience replay for differential-drive navigation."""

__version__ = "0.1.0"
