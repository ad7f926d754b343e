"""Test support: fixture corpus, mock cloud service, and synthetic cache writers."""

from .corpus import FixtureCorpus, default_corpus, empty_corpus, synthetic_audio, VALID_EMAIL, VALID_PASSWORD
from .mock_service import MockAlexaService, LoggedRequest, serve

__all__ = [
    "FixtureCorpus", "default_corpus", "empty_corpus", "synthetic_audio", "VALID_EMAIL", "VALID_PASSWORD",
    "MockAlexaService", "LoggedRequest", "serve",
]
