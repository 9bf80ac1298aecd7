"""Desk-scale lab for masked augmentation subspace self-supervised training."""

__version__ = "0.1.0"
