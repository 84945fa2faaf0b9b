"""Evaluation metrics, preprocessing transforms and a toy latent-diffusion engine
for studying generative models of image tiles."""

__version__ = "0.1.0"
