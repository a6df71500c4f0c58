"""Regime-aware streaming learner: exact change-variable inference plus per-regime sparse subnetworks."""

__version__ = "0.1.0"
