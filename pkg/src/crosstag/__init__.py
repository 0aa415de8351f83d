"""Cross-domain music auto-tagging toolkit."""

__version__ = "0.1.0"
