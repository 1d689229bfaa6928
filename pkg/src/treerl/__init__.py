"""Tree-structured Q-learning search for multi-object localization on synthetic scenes."""

__version__ = "0.1.0"
