"""Weakly-labelled logo dataset construction and iterative self/co-mining
detector training, with a simulated backend for desk-scale experiments.

Typical library entry points:

    from logomine.engine import MiningConfig, run
    from logomine.evalkit import evaluate_detections
    from logomine.simworld import SimWorldSpec, generate_world
"""

__version__ = "0.1.0"
