"""Cross-sentence context windows and contextual majority voting for NER."""

__version__ = "0.1.0"
