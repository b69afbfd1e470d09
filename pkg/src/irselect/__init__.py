"""Decoherence kernels, reduced dynamics and a truncated-Fock oracle for a linearly coupled boson field."""
from .measures import (Discrete, IRClassification, MeasureError, PowerLaw, Tabulated, classify,
                       coupling_admissible, discretize, moment)
from .kernels import (DecoherenceProfile, PhaseProfile, asymptotic_fit, az_chi, chi0, chi_analytic,
                      chi_superposed, phase_theta, point_measure_lower_bound, recurrence_scan, zeta,
                      zeta_kms)
from .dynamics import (DensityMatrix, SectorSelection, SuperselectedSystem, bound_audit, evolve,
                       evolve_mixture, offdiag_norm, sphi_bound_check, sphi_build)
from .oracle import (TruncatedFock, build_hamiltonian, chi_numeric, ground_state_diagnostics,
                     lower_bound_check, reduced_dynamics_numeric, spectrum_shift_check)
from .states import Coherent, Superposed, Thermal, Vacuum

__version__ = "0.1.0"
