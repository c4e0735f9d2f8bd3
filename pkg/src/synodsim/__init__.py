"""Deterministic simulation and checking of Synod under a failure-aware actor model."""

__version__ = "0.1.0"
