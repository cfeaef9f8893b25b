"""Continuous temporal graph networks over event streams.

Memory + temporal-attention encoder whose per-event embeddings evolve through
a learnable ODE integrated over the link duration, trained for link
prediction and node classification at desk scale.
"""

__version__ = "0.1.0"
