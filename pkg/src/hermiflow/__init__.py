"""Tensorized Hermite algebra and manifold gradient flows for Gaussian
multi-index learning."""

__version__ = "0.1.0"
