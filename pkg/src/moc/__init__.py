"""Multi-objective control: preference-conditioned PPO with min-norm objective balancing."""

__version__ = "0.1.0"
