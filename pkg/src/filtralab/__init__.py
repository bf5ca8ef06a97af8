"""Numerical laboratory for enlargement-of-filtration drift formulas.

Submodules: ``elemint`` (deterministic elementary-integral calculus),
``gluing`` (local-to-global semimartingale decomposition), ``paths``
(simulation and pathwise conditioning data), ``drifts`` (closed-form drift
evaluators), ``verify`` (Monte Carlo martingale certification),
``scenarios``/``cli`` (experiment runner).
"""

from .grids import GridPath, PathEnsemble, TimeGrid
from .paths import ScaleFunction, reciprocal_scale

__all__ = [
    "TimeGrid",
    "GridPath",
    "PathEnsemble",
    "ScaleFunction",
    "reciprocal_scale",
]

__version__ = "0.1.0"
