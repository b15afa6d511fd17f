"""Retention-time selection for STT-RAM L1 data caches: simulation, features, KNN and policies."""

__version__ = "0.1.0"
