"""Duffing-oscillator NARX lab: simulation, noise trials, from-scratch
NARX networks with optional lead-time auxiliary outputs, free-run
evaluation, and hyperparameter sweeps."""

__version__ = "0.1.0"
