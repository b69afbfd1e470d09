"""Reduced dynamics of a system with a conserved coupling operator.

The system is described by joint eigendata ``(E_i, λ_i)`` of its Hamiltonian
and of the operator that couples to the field.  Coherences evolve as

    ρ_ij(t) = e^{-i(E_i - E_j)t} χ(λ_j, λ_i; t) ρ_ij(0)

with ``χ`` from :mod:`irselect.kernels`.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from . import kernels as kn
from .measures import Discrete
from .states import Coherent, StateError, Superposed, Thermal, Vacuum

HERMITIAN_TOL = 1e-12
PSD_FLOOR = -1e-10
TRACE_TOL = 1e-12
AUDIT_SLACK = 1e-9
SPHI_SLACK = 1e-10
ENVELOPE_TOL = 1e-8


class DynamicsError(ValueError):
    pass


# -- system data -------------------------------------------------------------------

@dataclass(frozen=True)
class SuperselectedSystem:
    """Joint eigendata of the system Hamiltonian and the conserved operator."""

    energies: np.ndarray
    sector_values: np.ndarray
    label: str = "explicit"
    grid_spacing: float | None = None

    def __post_init__(self):
        e = np.array(self.energies, dtype=float).ravel()
        lam = np.array(self.sector_values, dtype=float).ravel()
        if e.size == 0 or e.shape != lam.shape:
            raise DynamicsError("energies and sector values must be non-empty and of equal length")
        if not (np.all(np.isfinite(e)) and np.all(np.isfinite(lam))):
            raise DynamicsError("energies and sector values must be finite")
        e.setflags(write=False)
        lam.setflags(write=False)
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "sector_values", lam)

    @property
    def dim(self) -> int:
        return self.energies.size

    @classmethod
    def spin(cls, alpha: float, beta: float) -> "SuperselectedSystem":
        """Spin one half with ``H_S = α σ_3`` and coupling operator ``β σ_3``."""
        return cls([alpha, -alpha], [beta, -beta], label="spin")

    @classmethod
    def particle_grid(cls, p_max: float, points: int, mass: float = 1.0) -> "SuperselectedSystem":
        """Free particle on a momentum grid, coupled through its momentum."""
        if points < 1 or not p_max > 0:
            raise DynamicsError("particle grid needs points >= 1 and p_max > 0")
        p = np.linspace(-p_max, p_max, points)
        spacing = float(p[1] - p[0]) if points > 1 else 0.0
        return cls(p**2 / (2 * mass), p, label="particle-grid", grid_spacing=spacing)

    def projector(self, sel: "SectorSelection") -> np.ndarray:
        return np.diag(sel.mask(self).astype(float))


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, positive, unit-trace matrix in the joint eigenbasis."""

    data: np.ndarray

    def __post_init__(self):
        rho = np.array(self.data, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.size == 0:
            raise StateError("density matrix must be square and non-empty")
        if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
            raise StateError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1.0) > TRACE_TOL:
            raise StateError(f"density matrix trace is {np.trace(rho).real!r}, not 1")
        if np.linalg.eigvalsh(rho).min() < PSD_FLOOR:
            raise StateError("density matrix is not positive semidefinite")
        rho.setflags(write=False)
        object.__setattr__(self, "data", rho)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @classmethod
    def pure(cls, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex).ravel()
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))


def random_density(rng: np.random.Generator, dim: int, rank: int | None = None) -> DensityMatrix:
    """``G G^† / tr`` with a complex Ginibre ``G`` of the given rank."""
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho / np.trace(rho).real)


@dataclass(frozen=True)
class SectorSelection:
    """Sector values in ``[lo, hi)``, or an explicit set of basis indices."""

    lo: float = -math.inf
    hi: float = math.inf
    indices: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.indices is None and not self.lo < self.hi:
            raise DynamicsError(f"empty interval [{self.lo}, {self.hi})")
        if self.indices is not None:
            object.__setattr__(self, "indices", tuple(sorted(set(int(i) for i in self.indices))))

    @classmethod
    def interval(cls, lo: float, hi: float) -> "SectorSelection":
        return cls(lo, hi)

    @classmethod
    def of(cls, indices) -> "SectorSelection":
        return cls(indices=tuple(indices))

    def mask(self, sys_or_values) -> np.ndarray:
        if isinstance(sys_or_values, SuperselectedSystem):
            values = sys_or_values.sector_values
        else:
            values = np.asarray(sys_or_values, dtype=float)
        m = np.zeros(values.size, dtype=bool)
        if self.indices is not None:
            idx = np.array(self.indices, dtype=int)
            if idx.size and (idx.min() < 0 or idx.max() >= values.size):
                raise DynamicsError("selection index out of range")
            m[idx] = True
            return m
        return (values >= self.lo) & (values < self.hi)


def sector_gap(values, d1: SectorSelection, d2: SectorSelection) -> float:
    """Smallest ``|λ_i - λ_j|`` over selected pairs; ``inf`` if a selection is empty."""
    values = np.asarray(values, dtype=float)
    a, b = values[d1.mask(values)], values[d2.mask(values)]
    if a.size == 0 or b.size == 0:
        return math.inf
    return float(np.min(np.abs(a[:, None] - b[None, :])))


# -- evolution ------------------------------------------------------------------------

def _reference(beta: float, f, ref):
    if ref is not None:
        return ref
    if not math.isinf(beta):
        if f is not None:
            raise StateError("a displacement cannot be combined with a thermal reference")
        return Thermal(beta)
    return Coherent(f) if f is not None else Vacuum()


def kernel_matrix(sys: SuperselectedSystem, sigma, t: float, ref=None,
                  zeta_value: float | None = None, lamb_value: float | None = None) -> np.ndarray:
    """``K_ij = e^{-i(E_i - E_j)t} χ(λ_j, λ_i; t)``, so that ``ρ(t) = K ∘ ρ(0)``.

    ``zeta_value`` and ``lamb_value`` let callers reuse ``ζ(t)`` (or ``ζ_β``)
    and :func:`kernels.lamb_integral` across many evaluations at the same time.
    """
    ref = Vacuum() if ref is None else ref
    lam = sys.sector_values
    uniq, inv = np.unique(lam, return_inverse=True)
    rot = np.exp(-1j * np.outer(sys.energies, np.ones(sys.dim)) * t)
    rot = rot * np.conj(rot.T)
    if t == 0:
        return np.ones((sys.dim, sys.dim), dtype=complex)
    if isinstance(ref, Superposed):
        chi = np.empty((uniq.size, uniq.size), dtype=complex)
        for a in range(uniq.size):
            for b in range(uniq.size):
                chi[a, b] = kn.chi_superposed(sigma, ref, uniq[b], uniq[a], t) if a != b else 1.0
        return rot * chi[np.ix_(inv, inv)]
    if isinstance(ref, Thermal):
        z = kn.zeta_kms(sigma, ref.beta, t) if zeta_value is None else zeta_value
        f = None
    elif isinstance(ref, (Vacuum, Coherent)):
        z = kn.zeta(sigma, t) if zeta_value is None else zeta_value
        f = ref.f if isinstance(ref, Coherent) else None
    else:
        raise StateError(f"unsupported reference state {ref!r}")
    lamb = kn.lamb_integral(sigma, t) if lamb_value is None else lamb_value
    theta = np.array([kn.phase_theta(sigma, x, t, f, lamb=lamb) for x in uniq])
    d = uniq[:, None] - uniq[None, :]
    chi = np.exp(-(d**2) * z) * np.exp(1j * (theta[None, :] - theta[:, None]))
    return rot * chi[np.ix_(inv, inv)]


def _check_dims(rho: np.ndarray, sys: SuperselectedSystem):
    if rho.shape != (sys.dim, sys.dim):
        raise DynamicsError(f"density matrix is {rho.shape}, system dimension is {sys.dim}")


def evolve(rho0: DensityMatrix, sys: SuperselectedSystem, sigma, beta: float = math.inf,
           t: float = 0.0, f=None, ref=None, zeta_value=None, lamb_value=None) -> DensityMatrix:
    """Reduced density matrix at time ``t``.

    The reference state is ``ref`` if given, else thermal at finite ``beta``,
    else coherent with displacement ``f``, else the vacuum.
    """
    rho = rho0.data if isinstance(rho0, DensityMatrix) else np.asarray(rho0, dtype=complex)
    _check_dims(rho, sys)
    out = kernel_matrix(sys, sigma, t, _reference(beta, f, ref), zeta_value, lamb_value) * rho
    out = 0.5 * (out + out.conj().T)
    return DensityMatrix(out)


@dataclass(frozen=True)
class MixtureResult:
    matrix: np.ndarray
    valid: bool
    min_eigenvalue: float
    trace: float


def evolve_mixture(components: Sequence, sys: SuperselectedSystem, sigma, t: float) -> MixtureResult:
    """``Σ c_μ Φ_t^μ(ρ_μ)`` for ``W = Σ c_μ ρ_μ ⊗ ρ_E,μ``; ``c_μ`` may be negative."""
    components = list(components)
    if not components:
        raise DynamicsError("empty mixture")
    total = sum(float(c) for c, _, _ in components)
    if abs(total - 1.0) > 1e-12:
        raise DynamicsError(f"mixture weights sum to {total!r}, not 1")
    out = np.zeros((sys.dim, sys.dim), dtype=complex)
    for c, rho, ref in components:
        rho = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
        _check_dims(rho, sys)
        out += float(c) * kernel_matrix(sys, sigma, t, ref) * rho
    out = 0.5 * (out + out.conj().T)
    ev = float(np.linalg.eigvalsh(out).min())
    return MixtureResult(out, ev >= PSD_FLOOR, ev, float(np.trace(out).real))


# -- trace norms and audits --------------------------------------------------------------

def trace_norm(a: np.ndarray) -> float:
    if a.size == 0:
        return 0.0
    return float(np.sum(np.linalg.svd(a, compute_uv=False)))


def offdiag_norm(rho, d1: SectorSelection, d2: SectorSelection, sys=None) -> float:
    """``‖P(Δ1) ρ P(Δ2)‖_1``."""
    m = rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho)
    values = sys.sector_values if sys is not None else np.zeros(m.shape[0])
    if sys is None and (d1.indices is None or d2.indices is None):
        raise DynamicsError("interval selections need the system's sector values")
    return trace_norm(m[np.ix_(d1.mask(values), d2.mask(values))])


@dataclass(frozen=True)
class AuditReport:
    delta: float
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def ratios(self) -> np.ndarray:
        return self.lhs / self.rhs

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.ratios))

    @property
    def violations(self) -> int:
        return int(np.count_nonzero(self.ratios > 1 + AUDIT_SLACK))

    def as_dict(self) -> dict:
        return {
            "delta": self.delta,
            "times": self.times.tolist(),
            "lhs": self.lhs.tolist(),
            "rhs": self.rhs.tolist(),
            "max_ratio": self.max_ratio,
        }


def bound_audit(rho0, sys, sigma, beta, d1, d2, times, zetas=None, lambs=None) -> AuditReport:
    """Off-diagonal block norm against ``exp(-δ^2 ζ(t))``.

    ``zetas`` and ``lambs`` may carry precomputed ``ζ(t)`` (or ``ζ_β``) and
    :func:`kernels.lamb_integral` values for the grid.
    """
    times = np.asarray(times, dtype=float)
    delta = sector_gap(sys.sector_values, d1, d2)
    if math.isinf(delta):
        raise DynamicsError("a sector selection is empty")
    ref = _reference(beta, None, None)
    if zetas is None:
        zetas = [kn.zeta_kms(sigma, beta, t) for t in times]
    if lambs is None:
        lambs = [kn.lamb_integral(sigma, t) for t in times]
    lhs, rhs = [], []
    for t, z, lm in zip(times, zetas, lambs):
        rho_t = evolve(rho0, sys, sigma, beta, t, ref=ref, zeta_value=z, lamb_value=lm)
        lhs.append(offdiag_norm(rho_t, d1, d2, sys))
        rhs.append(math.exp(-delta * delta * z))
    return AuditReport(delta, times, np.array(lhs), np.array(rhs))


# -- finite-dimensional operator integral bound ---------------------------------------------

def sphi_build(points, S, kernel: Callable) -> np.ndarray:
    """``(S_φ)_ij = χ(x_i - x_j) S_ij``."""
    x = np.asarray(points, dtype=float).ravel()
    S = np.asarray(S)
    if S.shape != (x.size, x.size):
        raise DynamicsError(f"S is {S.shape} but there are {x.size} points")
    return np.asarray(kernel(x[:, None] - x[None, :])) * S


@dataclass(frozen=True)
class Envelope:
    """Kernel ``χ`` with derivative ``dchi`` dominated by ``φ(|x|)``.

    ``tail(δ)`` returns ``∫_δ^∞ φ``; when omitted it is integrated numerically.
    """

    chi: Callable
    dchi: Callable
    phi: Callable
    tail: Callable | None = None
    name: str = "custom"

    def tail_integral(self, delta: float) -> float:
        if self.tail is not None:
            return float(self.tail(delta))
        val, _ = integrate.quad(lambda x: float(self.phi(x)), delta, np.inf, limit=200)
        return val


def gaussian_envelope(zeta_value: float) -> Envelope:
    """``χ(x) = e^{-x^2 ζ}``, ``φ(x) = 2ζ x e^{-x^2 ζ}``, ``∫_δ^∞ φ = e^{-δ^2 ζ}``."""
    z = float(zeta_value)
    return Envelope(
        chi=lambda x: np.exp(-np.square(x) * z),
        dchi=lambda x: -2 * z * np.asarray(x) * np.exp(-np.square(x) * z),
        phi=lambda x: 2 * z * np.abs(x) * np.exp(-np.square(x) * z),
        tail=lambda d: math.exp(-d * d * z),
        name=f"gaussian[zeta={z:g}]",
    )


@dataclass(frozen=True)
class SphiCheck:
    lhs: float
    rhs: float
    holds: bool
    delta: float
    theorem_applies: bool

    def as_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "holds": self.holds,
                "delta": self.delta, "theorem_applies": self.theorem_applies}


def _half_line(sel: SectorSelection, side: str) -> float:
    if sel.indices is not None:
        raise DynamicsError("the operator-integral bound needs half-line selections")
    if side == "left":
        if not (math.isinf(sel.lo) and sel.lo < 0):
            raise DynamicsError("first selection must be (-inf, b)")
        return sel.hi
    if not (math.isinf(sel.hi) and sel.hi > 0):
        raise DynamicsError("second selection must be [a, inf)")
    return sel.lo


def sphi_bound_check(points, S, envelope: Envelope, d1: SectorSelection, d2: SectorSelection,
                     grid_points: int = 4001) -> SphiCheck:
    """``‖P(Δ1) S_φ P(Δ2)‖_1`` against ``‖S‖_1 ∫_δ^∞ φ``.

    The envelope ``|χ'(x)| <= φ(|x|)`` is sampled on a grid covering all point
    differences.  ``theorem_applies`` reports whether ``φ`` is nonincreasing
    on ``[δ, ∞)``; for the Gaussian envelope the right-hand side is a valid
    bound regardless, because a positive-definite unit-diagonal kernel does
    not increase the trace norm.
    """
    x = np.asarray(points, dtype=float).ravel()
    S = np.asarray(S, dtype=complex)
    b1, a2 = _half_line(d1, "left"), _half_line(d2, "right")
    delta = a2 - b1
    if delta < 0:
        raise DynamicsError("selections overlap")
    span = max(float(np.ptp(x)), delta, 1.0)
    grid = np.linspace(0.0, 2 * span, grid_points)
    excess = np.abs(envelope.dchi(grid)) - envelope.phi(grid)
    if np.max(excess) > ENVELOPE_TOL:
        raise DynamicsError("kernel derivative exceeds the supplied envelope")
    tail_grid = grid[grid >= delta]
    vals = envelope.phi(tail_grid)
    applies = bool(np.all(np.diff(vals) <= ENVELOPE_TOL))
    S_phi = sphi_build(x, S, envelope.chi)
    m1 = (x < b1)
    m2 = (x >= a2)
    lhs = trace_norm(S_phi[np.ix_(m1, m2)])
    rhs = trace_norm(S) * envelope.tail_integral(delta)
    return SphiCheck(lhs, rhs, lhs <= rhs + SPHI_SLACK, delta, applies)


# -- serialization ------------------------------------------------------------------------

def evolution_csv(times, matrices, pairs=None) -> str:
    """Rows ``t,i,j,re_rho_ij,im_rho_ij``; ``pairs`` selects entries (default: upper triangle)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "i", "j", "re_rho_ij", "im_rho_ij"])
    for t, m in zip(times, matrices):
        m = m.data if isinstance(m, DensityMatrix) else m
        sel = pairs if pairs is not None else [(i, j) for i in range(m.shape[0]) for j in range(i, m.shape[0])]
        for i, j in sel:
            w.writerow([f"{t:.16e}", i, j, f"{m[i, j].real:.16e}", f"{m[i, j].imag:.16e}"])
    return buf.getvalue()


def audit_json(report: AuditReport) -> str:
    return json.dumps(report.as_dict(), indent=2, sort_keys=True)
