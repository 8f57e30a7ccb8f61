"""Continuous sequence-to-sentence recognition with a jointly trained
video-sentence latent space and a hierarchical attention encoder-decoder."""

__version__ = "0.1.0"
