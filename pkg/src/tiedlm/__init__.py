"""Neural language-modeling toolkit with tied input/output word embeddings."""

__version__ = "0.1.0"
