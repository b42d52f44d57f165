"""Activity-travel plan synthesis from sparse GPS traces and travel-survey diaries."""

__version__ = "0.1.0"
