"""Hartree plus Bogoliubov dynamics of bosons on a torus, benchmarked against exact N-body evolution."""

from .spectral import ModeBasis, build_mode_basis, scaled_potential_fourier
from .hartree import evolve_hartree
from .pair import PairState, build_kernels, evolve_pair, gse_lower_bound
from .fock import FockBasis, FockVector, evolve_fock, extract_one_body, quasifree_from_pair
from .nbody import (ErrorRecord, excitation_join, excitation_split, norm_error,
                    run_comparison)

__version__ = "0.1.0"

__all__ = [
    "ModeBasis", "build_mode_basis", "scaled_potential_fourier", "evolve_hartree", "PairState",
    "build_kernels", "evolve_pair", "gse_lower_bound", "FockBasis", "FockVector", "evolve_fock",
    "extract_one_body", "quasifree_from_pair", "ErrorRecord", "excitation_join",
    "excitation_split", "norm_error", "run_comparison",
]
