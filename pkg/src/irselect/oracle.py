"""Brute-force verifier on a truncated Fock space.

Each mode keeps occupations ``0..d-1``; the product basis is row-major over
occupation tuples ``(n_1, ..., n_N)`` with the first mode most significant,
so basis index ``Σ_k n_k d^(N-1-k)``.  Everything here is built from
explicit ladder matrices and exact diagonalization; no closed-form kernel
from :mod:`irselect.kernels` is used.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .dynamics import DensityMatrix, SuperselectedSystem
from .measures import Discrete, MeasureError
from .states import Coherent, StateError, Superposed, Thermal, Vacuum

DEFAULT_BUDGET = 1 << 14
DENSE_LIMIT = 4096
TAIL_TOL = 1e-10
GIBBS_TAIL_TOL = 1e-12


class BudgetError(RuntimeError):
    """Requested truncation exceeds the configured dimension budget."""


def configured_budget() -> int:
    raw = os.environ.get("IRSELECT_BUDGET")
    if raw is None:
        return DEFAULT_BUDGET
    try:
        val = int(raw)
    except ValueError as exc:
        raise ValueError(f"IRSELECT_BUDGET must be an integer, got {raw!r}") from exc
    if val < 1:
        raise ValueError("IRSELECT_BUDGET must be positive")
    return val


def _annihilation(d: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1)


@dataclass(frozen=True)
class TruncatedFock:
    omegas: np.ndarray
    couplings: np.ndarray
    cutoff: int
    budget: int = field(default_factory=configured_budget)
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        om = np.array(self.omegas, dtype=float).ravel()
        h = np.array(self.couplings, dtype=float).ravel()
        if om.size == 0 or om.shape != h.shape:
            raise MeasureError("need one coupling per mode")
        if np.any(om <= 0):
            raise MeasureError("mode frequencies must be positive")
        if self.cutoff < 2:
            raise BudgetError("per-mode cutoff must be at least 2")
        if self.cutoff ** om.size > self.budget:
            raise BudgetError(f"dimension {self.cutoff}^{om.size} exceeds the budget {self.budget}")
        om.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "omegas", om)
        object.__setattr__(self, "couplings", h)

    @classmethod
    def from_measure(cls, sigma: Discrete, cutoff: int, budget: int | None = None) -> "TruncatedFock":
        if not isinstance(sigma, Discrete):
            raise MeasureError("the Fock oracle needs a Discrete measure")
        budget = configured_budget() if budget is None else budget
        return cls(sigma.omegas, sigma.couplings, cutoff, budget)

    @property
    def n_modes(self) -> int:
        return self.omegas.size

    @property
    def dim(self) -> int:
        return self.cutoff ** self.n_modes

    @property
    def occupations(self) -> np.ndarray:
        """``(dim, N)`` occupation tuples in basis order."""
        if "occ" not in self._cache:
            grids = np.indices((self.cutoff,) * self.n_modes).reshape(self.n_modes, -1).T
            self._cache["occ"] = grids
        return self._cache["occ"]

    def lowering(self, k: int) -> np.ndarray:
        """Annihilator of mode ``k`` on the product space."""
        key = ("a", k)
        if key not in self._cache:
            eye = np.eye(self.cutoff)
            m = np.ones((1, 1))
            for j in range(self.n_modes):
                m = np.kron(m, _annihilation(self.cutoff) if j == k else eye)
            self._cache[key] = m
        return self._cache[key]

    def field(self) -> np.ndarray:
        """``Σ_k h_k (a_k + a_k^†)``."""
        if "phi" not in self._cache:
            phi = np.zeros((self.dim, self.dim))
            for k, h in enumerate(self.couplings):
                a = self.lowering(k)
                phi += h * (a + a.T)
            self._cache["phi"] = phi
        return self._cache["phi"]

    def free_energies(self) -> np.ndarray:
        return self.occupations @ self.omegas


def build_hamiltonian(fock: TruncatedFock, lam: float) -> np.ndarray:
    """``Σ ω_k n_k + λ Σ h_k (a_k + a_k^†)`` as a dense matrix."""
    return np.diag(fock.free_energies()) + lam * fock.field()


def _dense_eigh(h: np.ndarray):
    if h.shape[0] > DENSE_LIMIT:
        raise BudgetError(f"dense diagonalization capped at dimension {DENSE_LIMIT}, got {h.shape[0]}")
    return np.linalg.eigh(h)


def _eig(fock: TruncatedFock, lam: float):
    key = ("eig", float(lam))
    if key not in fock._cache:
        fock._cache[key] = _dense_eigh(build_hamiltonian(fock, lam))
    return fock._cache[key]


def propagator(fock: TruncatedFock, lam: float, t: float) -> np.ndarray:
    """``exp(-i H_λ t)``."""
    e, v = _eig(fock, lam)
    return (v * np.exp(-1j * e * t)) @ v.conj().T


# -- environment states -------------------------------------------------------------------

def displaced_vacuum(fock: TruncatedFock, f) -> np.ndarray:
    """``exp(Σ f_k a_k^† - conj(f_k) a_k)`` applied to the vacuum, via a matrix exponential."""
    f = np.asarray(f, dtype=complex).ravel()
    if f.size != fock.n_modes:
        raise StateError(f"displacement has {f.size} entries, oracle has {fock.n_modes} modes")
    gen = np.zeros((fock.dim, fock.dim), dtype=complex)
    for k, fk in enumerate(f):
        a = fock.lowering(k)
        gen += fk * a.T - np.conj(fk) * a
    vac = np.zeros(fock.dim, dtype=complex)
    vac[0] = 1.0
    psi = linalg.expm(gen) @ vac
    _tail_check(fock, psi)
    return psi


def _tail_check(fock: TruncatedFock, psi: np.ndarray):
    edge = np.any(fock.occupations >= fock.cutoff - 2, axis=1)
    tail = float(np.sum(np.abs(psi[edge]) ** 2) / np.sum(np.abs(psi) ** 2))
    if tail > TAIL_TOL:
        raise StateError(f"coherent state leaks {tail:.2e} into the top occupation levels; raise the cutoff")


def _gibbs_weights(fock: TruncatedFock, beta: float) -> np.ndarray:
    worst = float(np.max(np.exp(-beta * fock.omegas * fock.cutoff)))
    if worst >= GIBBS_TAIL_TOL:
        raise StateError(f"Gibbs weight at the cutoff is {worst:.2e}; raise beta or the cutoff")
    e = fock.free_energies()
    p = np.exp(-beta * (e - e.min()))
    return p / p.sum()


def _pure_state(fock: TruncatedFock, ref) -> np.ndarray | None:
    if isinstance(ref, Vacuum):
        psi = np.zeros(fock.dim, dtype=complex)
        psi[0] = 1.0
        return psi
    if isinstance(ref, Coherent):
        return displaced_vacuum(fock, ref.f)
    if isinstance(ref, Superposed):
        psi = np.zeros(fock.dim, dtype=complex)
        for c, f in zip(ref.coeffs, ref.displacements):
            # unnormalized exponential vector exp(f) = e^{|f|^2/2} T(f) vac
            psi += c * math.exp(0.5 * float(np.vdot(f, f).real)) * displaced_vacuum(fock, f)
        return psi / np.linalg.norm(psi)
    return None


def environment_state(fock: TruncatedFock, ref) -> np.ndarray:
    """Density matrix of the reference state on the truncated space."""
    psi = _cached_pure_state(fock, ref) if not isinstance(ref, Thermal) else None
    if psi is not None:
        return np.outer(psi, psi.conj())
    if isinstance(ref, Thermal):
        return np.diag(_gibbs_weights(fock, ref.beta)).astype(complex)
    raise StateError(f"unsupported reference state {ref!r}")


def _evolve_vector(fock: TruncatedFock, lam: float, t: float, psi: np.ndarray) -> np.ndarray:
    e, v = _eig(fock, lam)
    return v @ (np.exp(-1j * e * t) * (v.conj().T @ psi))


def _ref_key(ref):
    if isinstance(ref, Coherent):
        return ("coherent", ref.f.tobytes())
    if isinstance(ref, Superposed):
        return ("superposed", ref.coeffs.tobytes(), ref.displacements.tobytes(), ref.displacements.shape)
    return (ref.tag,)


def _cached_pure_state(fock: TruncatedFock, ref):
    key = ("psi",) + _ref_key(ref)
    if key not in fock._cache:
        fock._cache[key] = _pure_state(fock, ref)
    return fock._cache[key]


def chi_numeric(fock: TruncatedFock, alpha: float, beta_sector: float, t: float, ref) -> complex:
    """``tr(e^{i H_α t} e^{-i H_β t} ρ_E)`` by exact diagonalization."""
    if not isinstance(ref, Thermal):
        psi = _cached_pure_state(fock, ref)
        if psi is None:
            raise StateError(f"unsupported reference state {ref!r}")
        return complex(np.vdot(_evolve_vector(fock, alpha, t, psi),
                               _evolve_vector(fock, beta_sector, t, psi)))
    ua = propagator(fock, alpha, t)
    ub = propagator(fock, beta_sector, t)
    if isinstance(ref, Thermal):
        p = _gibbs_weights(fock, ref.beta)
        return complex(np.sum(np.conj(ua) * ub, axis=0) @ p)
    raise StateError(f"unsupported reference state {ref!r}")


def chi_numeric_converged(sigma: Discrete, alpha, beta_sector, t, ref, cutoff: int = 8,
                          tol: float = 1e-8, budget: int | None = None):
    """Double the cutoff until ``chi_numeric`` moves by less than ``tol``.

    Returns ``(value, cutoff)``; raises :class:`BudgetError` if the budget is hit first.
    """
    budget = configured_budget() if budget is None else budget
    prev = None
    d = cutoff
    while True:
        try:
            fock = TruncatedFock.from_measure(sigma, d, budget)
            val = chi_numeric(fock, alpha, beta_sector, t, ref)
        except StateError:
            val = None
        if val is not None and prev is not None and abs(val - prev) < tol:
            return val, d
        prev = val
        d *= 2
        if d ** sigma.n_modes > min(budget, DENSE_LIMIT):
            raise BudgetError(f"chi_numeric not stable to {tol:g} within the budget")


# -- full system-environment evolution ---------------------------------------------------------

def _total_hamiltonian(sys: SuperselectedSystem, fock: TruncatedFock) -> np.ndarray:
    eye_e = np.eye(fock.dim)
    h_e = np.diag(fock.free_energies())
    return (np.kron(np.diag(sys.energies), eye_e) + np.kron(np.eye(sys.dim), h_e)
            + np.kron(np.diag(sys.sector_values), fock.field()))


def _spectral_factors(m: np.ndarray):
    """Eigenpairs of a Hermitian matrix, exact zeros of the spectrum dropped."""
    vals, vecs = np.linalg.eigh(0.5 * (m + m.conj().T))
    keep = np.abs(vals) > 1e-18 * max(1.0, float(np.max(np.abs(vals))))
    return vals[keep], vecs[:, keep]


def _environment_factors(fock: TruncatedFock, ref):
    if isinstance(ref, Thermal):
        q = _gibbs_weights(fock, ref.beta)
        keep = q > 0
        return q[keep], np.eye(fock.dim, dtype=complex)[:, keep]
    psi = _cached_pure_state(fock, ref)
    if psi is None:
        raise StateError(f"unsupported reference state {ref!r}")
    return np.ones(1), psi[:, None]


def mixture_dynamics_numeric(components, sys: SuperselectedSystem, fock: TruncatedFock, t: float) -> np.ndarray:
    """``tr_E U(t) W U(t)^†`` for ``W = Σ c_μ ρ_μ ⊗ ρ_E,μ``.

    ``W`` is propagated through its eigenvectors, so pure references cost a
    handful of matrix-vector products rather than two full matrix products.
    """
    dim_s, dim_e = sys.dim, fock.dim
    dim_total = dim_s * dim_e
    if dim_total > fock.budget:
        raise BudgetError(f"system times field dimension {dim_total} exceeds the budget {fock.budget}")
    key = ("total", sys.energies.tobytes(), sys.sector_values.tobytes())
    if key not in fock._cache:
        fock._cache[key] = _dense_eigh(_total_hamiltonian(sys, fock))
    e, v = fock._cache[key]
    out = np.zeros((dim_s, dim_s), dtype=complex)
    for c, rho, ref in components:
        rho = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
        if rho.shape != (dim_s, dim_s):
            raise StateError("density matrix does not match the system dimension")
        p, phi = _spectral_factors(rho)
        q, chi = _environment_factors(fock, ref)
        x = np.einsum("ik,aj->iakj", phi, chi).reshape(dim_total, -1)
        y = (v @ (np.exp(-1j * e * t)[:, None] * (v.conj().T @ x))).reshape(dim_s, dim_e, -1)
        s = float(c) * np.outer(p, q).ravel()
        out += np.einsum("iak,jak,k->ij", y, y.conj(), s)
    return out


def reduced_dynamics_numeric(rho_s0, sys: SuperselectedSystem, fock: TruncatedFock, ref, t: float) -> DensityMatrix:
    out = mixture_dynamics_numeric([(1.0, rho_s0, ref)], sys, fock, t)
    return DensityMatrix(0.5 * (out + out.conj().T))


# -- structural checks ---------------------------------------------------------------------

def spectrum_shift_check(fock: TruncatedFock, levels: int = 4) -> dict:
    """Lowest levels of ``H_1`` against those of ``H_0`` shifted by ``-Σ w_k/ω_k``."""
    shift = float(np.sum(fock.couplings**2 / fock.omegas))
    e1 = _eig(fock, 1.0)[0][:levels]
    e0 = np.sort(fock.free_energies())[:levels] - shift
    dev = np.abs(e1 - e0)
    return {
        "cutoff": fock.cutoff,
        "shift": shift,
        "ground_energy": float(e1[0]),
        "expected_ground_energy": -shift,
        "max_deviation": float(dev.max()),
        "spacing_deviation": float(np.max(np.abs(np.diff(e1) - np.diff(e0)))) if levels > 1 else 0.0,
    }


ROUNDOFF_FLOOR = 1e-13


def spectrum_shift_study(sigma: Discrete, cutoffs=(8, 16, 32), levels: int = 4,
                         required_factor: float = 5.0) -> dict:
    """Deviation of :func:`spectrum_shift_check` under cutoff refinement.

    Deviations are floored at ``ROUNDOFF_FLOOR`` before taking ratios; a step
    whose deviations are both at the floor counts as converged.
    """
    reports = [spectrum_shift_check(TruncatedFock.from_measure(sigma, d), levels) for d in cutoffs]
    devs = [r["max_deviation"] for r in reports]
    floored = [max(d, ROUNDOFF_FLOOR) for d in devs]
    ratios = [a / b for a, b in zip(floored[:-1], floored[1:])]
    ok = all(r >= required_factor or (a == b == ROUNDOFF_FLOOR)
             for r, a, b in zip(ratios, floored[:-1], floored[1:]))
    return {"cutoffs": list(cutoffs), "deviations": devs, "reduction_factors": ratios,
            "shrinks": ok, "reports": reports}


def lower_bound_check(fock: TruncatedFock) -> dict:
    """Smallest eigenvalue of ``H_E - Φ(h)^2 / 2`` against ``-Σ w_k``."""
    admiss = float(np.sum(fock.couplings**2 / fock.omegas))
    floor = -float(np.sum(fock.couplings**2))
    if admiss > 0.25:
        return {"applicable": False, "sum_w_over_omega": admiss, "floor": floor}
    phi = fock.field()
    op = np.diag(fock.free_energies()) - 0.5 * phi @ phi
    min_eig = float(_dense_eigh(op)[0][0])
    return {
        "applicable": True,
        "sum_w_over_omega": admiss,
        "cutoff": fock.cutoff,
        "min_eigenvalue": min_eig,
        "floor": floor,
        "margin": min_eig - floor,
        "truncation_slack": max(0.0, floor - min_eig),
        "holds": min_eig >= floor - 1e-10,
    }


def ground_state_diagnostics(sigma: Discrete, fock: TruncatedFock | None = None) -> dict:
    """Bare boson number ``Σ w/ω^2`` and vacuum overlap ``exp(-Σ w/ω^2)`` of the interacting ground state."""
    if not isinstance(sigma, Discrete):
        raise MeasureError("ground_state_diagnostics needs a Discrete measure")
    number = float(np.sum(sigma.weights / sigma.omegas**2))
    out = {"bare_boson_number": number, "vacuum_overlap": math.exp(-number)}
    if fock is not None:
        e, v = _eig(fock, 1.0)
        g = v[:, 0]
        prob = np.abs(g) ** 2
        out["numeric_boson_number"] = float(prob @ fock.occupations.sum(axis=1))
        out["numeric_vacuum_overlap"] = float(prob[0])
        out["cutoff"] = fock.cutoff
    return out


# -- reports ----------------------------------------------------------------------------------

def _pair(z: complex) -> list[float]:
    return [float(z.real), float(z.imag)]


def comparison_report(config: dict, times, numeric, analytic) -> dict:
    numeric = np.asarray(numeric, dtype=complex)
    analytic = np.asarray(analytic, dtype=complex)
    return {
        "config": config,
        "t": [float(t) for t in times],
        "chi_numeric": [_pair(z) for z in numeric],
        "chi_analytic": [_pair(z) for z in analytic],
        "max_abs_diff": float(np.max(np.abs(numeric - analytic))) if numeric.size else 0.0,
    }


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
