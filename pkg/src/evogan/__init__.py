"""Unified multiclass hinge losses and the evolving universum GAN."""

__version__ = "0.1.0"
