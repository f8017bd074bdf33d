"""Velocity-prediction contouring control planner with Bayesian-optimization tuning."""
__version__ = "0.1.0"
