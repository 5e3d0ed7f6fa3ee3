"""Spectral inequalities, propagation of smallness and heat control on the lattice torus."""

__version__ = "0.1.0"

from .grid import Cell, CoefficientField, Grid, build_torus, cell_cover, sample_coefficients
from .operator import EllipticOperator, SpectralDecomposition, apply_function, assemble, eigendecompose, projector
from .sets import ObservationSet, SetSpec, generate_set, hausdorff_content, verify_density

__all__ = [
    "Cell", "CoefficientField", "Grid", "build_torus", "cell_cover", "sample_coefficients",
    "EllipticOperator", "SpectralDecomposition", "apply_function", "assemble", "eigendecompose", "projector",
    "ObservationSet", "SetSpec", "generate_set", "hausdorff_content", "verify_density",
]
