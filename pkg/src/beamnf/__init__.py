"""Normal-form data for the nonlinear beam equation on a torus, around a finite excited set."""
from .dispersion import DispersionContext, Divisor, classify_divisor, evaluate_divisor, scan_mass, scan_melnikov
from .lattice import ExcitedSetAnalysis, analyze_set, integer_sphere
from .normal_form import NormalFormParams, build_K, matrix_M, omega_vector
from .random_sets import TrialConfig, estimate_probabilities, sample_set, sphere_growth
from .spectral import (ClusteredSpectrumError, block_spectrum, certificates, check_hypothesis_A1,
                       spectral_report, symplectic_diagonalize)

__version__ = "0.1.0"

__all__ = [
    "ClusteredSpectrumError", "DispersionContext", "Divisor", "ExcitedSetAnalysis", "NormalFormParams",
    "TrialConfig", "analyze_set", "block_spectrum", "build_K", "certificates", "check_hypothesis_A1",
    "classify_divisor", "estimate_probabilities", "evaluate_divisor", "integer_sphere", "matrix_M",
    "omega_vector", "sample_set", "scan_mass", "scan_melnikov", "spectral_report", "sphere_growth",
    "symplectic_diagonalize", "__version__",
]
