"""Adversarial training through the Bregman-divergence lens."""
__version__ = "0.1.0"
