"""Online adversarial distillation for graph neural networks.

A self-contained training framework: a group of lightweight student GNNs
learns together, aligning node embeddings through cyclic adversarial
discriminators and predictions through temperature-softened KL, next to the
usual single/KD/FitNet/DML/ensemble baselines and a dynamic-graph robustness
harness. Built on an in-package reverse-mode autodiff core; numpy/scipy do
the array work underneath.
"""

__version__ = "0.1.0"
