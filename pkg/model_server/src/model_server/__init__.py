"""Reference server exposing next-token distributions over HTTP, so a real
transformer checkpoint can play the black-box role in a fuselm pipeline."""

__version__ = "0.1.0"

from .app import create_app
from .backends import HFCausalBackend, NGramBackend, load_backend

__all__ = ["__version__", "create_app", "HFCausalBackend", "NGramBackend",
           "load_backend"]
