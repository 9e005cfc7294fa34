"""Longitudinal-coupling controlled-phase gates: circuit reduction, phase-space
trajectories, gate scheduling, error budgets and stochastic checks."""

__version__ = "0.1.0"
