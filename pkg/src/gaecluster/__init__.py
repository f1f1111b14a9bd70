"""Graph auto-encoder clustering of companies from news co-occurrence and prices."""

__version__ = "0.1.0"
