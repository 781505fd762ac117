"""Adversarial representation sharing: collaborative learning on noised latent codes."""

__version__ = "0.1.0"
