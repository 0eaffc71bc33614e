"""Decaying action priors and multi-critic PPO on a planar torque-driven chain."""

__version__ = "0.1.0"
