"""Topic-oriented expert finding over community question-answering data."""

__version__ = "0.1.0"
