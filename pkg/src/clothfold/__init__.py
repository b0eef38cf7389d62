"""Desk-scale garment unfolding/folding stack.

Subpackages:
    garments    procedural garment templates with canonical coordinates
    simulation  position-based-dynamics cloth simulator and action primitives
    nn          small reverse-mode autodiff engine (numpy, float64)
    policy      point-cloud policy network: voting heads and pair scoring
    learning    losses, optimizers, gradient checks, training pipelines
    oracle      scripted demonstrator and reward computation
    control     episode state machine, workspace model, evaluation metrics
    service     annotation queue and HTTP API
"""

__version__ = "0.1.0"
