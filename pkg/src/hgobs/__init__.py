"""High-gain observers with limited gain power: design, simulation, analysis."""

from .canon import GainLadder, ObserverSpec, build_M, prime_triplet, selectors
from .gainsynth import assign_gains, refine_ladder
from .matstack import Polynomial, char_poly, eigvals, poly_from_roots

__all__ = [
    "GainLadder",
    "ObserverSpec",
    "Polynomial",
    "assign_gains",
    "build_M",
    "char_poly",
    "eigvals",
    "poly_from_roots",
    "refine_ladder",
    "prime_triplet",
    "selectors",
]

__version__ = "0.1.0"
