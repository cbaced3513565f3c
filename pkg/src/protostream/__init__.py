"""Semi-supervised lifelong identity retrieval on synthetic domain streams.

Learnable identity prototypes drive both training and pseudo-labeling; a
dual-model clustering-consistency filter purifies the pseudo-labels, a
prototype-affinity KL term preserves old structure across stages, and a
small alignment network maps new domains toward the previous one before the
frozen old model clusters them.
"""

__version__ = "0.1.0"
