"""Language representations learned by multilingual language models, compared
against genetic, geographic and structural distances between languages."""

__version__ = "0.1.0"
