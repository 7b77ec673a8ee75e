"""Apology-centered mediation workflow service for chat communities."""

__version__ = "0.1.0"
