"""LTL-guided reinforcement learning with an embedded product, modular DDPG and a finite-product oracle."""

__version__ = "0.1.0"
