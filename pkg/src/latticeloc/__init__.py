"""latticeloc: desk-scale simulation and numerical verification of 2D
lattice Schrodinger operators with radially decaying random disorder."""

__version__ = "0.1.0"

from .lattice import (  # noqa: F401
    DecayProfile,
    DisorderField,
    EnergyWindow,
    LatticeBox,
    TorusGrid,
    apply_hamiltonian,
    laplacian_symbol,
    sample_disorder,
)
