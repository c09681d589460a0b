"""High-order boundary integral solver on Bezier-patch surfaces."""

from . import (
    backends,
    chebyshev,
    evaluation,
    geometry,
    harness,
    kernels,
    quadrature,
    references,
    refinement,
    solver,
    spatial,
)
from .kernels import LAPLACE, STOKES, Family, KernelFamily, elasticity

__all__ = [
    "Family",
    "KernelFamily",
    "LAPLACE",
    "STOKES",
    "backends",
    "chebyshev",
    "elasticity",
    "evaluation",
    "geometry",
    "harness",
    "kernels",
    "quadrature",
    "references",
    "refinement",
    "solver",
    "spatial",
]

__version__ = "0.1.0"
