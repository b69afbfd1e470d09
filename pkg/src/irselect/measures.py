"""Spectral measures of the coupling vector and their infrared classification.

A measure ``dσ(λ)`` on ``(0, Λ]`` is represented in one of three ways:

* :class:`PowerLaw` -- density ``c * λ**(2*mu)`` on ``[floor, cutoff]``;
* :class:`Tabulated` -- piecewise-linear density through ``(λ_j, density_j)``;
* :class:`Discrete` -- point masses ``w_k`` at frequencies ``ω_k``.

Only the scalar measure is needed by every kernel in this package, so the
one-particle space and its Hamiltonian are never represented.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

ALLOWED_POWERS = (-2, -1, 0, 1)
# Divergent if the fitted exponent mu_hat <= 1/2 + this slack.
TABULATED_MU_TOLERANCE = 0.01
MIN_FIT_POINTS = 5


class MeasureError(ValueError):
    """Invalid spectral-measure data or an unsupported request."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PowerLaw:
    """Density ``c * λ**(2*mu)`` on ``[floor, cutoff]`` (``floor=0`` by default)."""

    c: float
    mu: float
    cutoff: float
    floor: float = 0.0

    def __post_init__(self):
        if not self.c > 0:
            raise MeasureError(f"power law scale c must be positive, got {self.c}")
        if not (self.cutoff > 0 and math.isfinite(self.cutoff)):
            raise MeasureError(f"UV cutoff must be positive and finite, got {self.cutoff}")
        if not 0 <= self.floor < self.cutoff:
            raise MeasureError(f"need 0 <= floor < cutoff, got floor={self.floor}")
        if self.floor == 0 and not self.mu > 0:
            # m_{-1} = c * int_0 λ^(2mu-1) dλ diverges for mu <= 0
            raise MeasureError(f"mu must be > 0 for a finite m_-1, got {self.mu}")

    kind = "powerlaw"

    @property
    def support(self) -> tuple[float, float]:
        return (self.floor, self.cutoff)

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([self.floor, self.cutoff])

    def density(self, lam):
        lam = np.asarray(lam, dtype=float)
        inside = (lam >= self.floor) & (lam <= self.cutoff)
        return np.where(inside, self.c * np.abs(lam) ** (2 * self.mu), 0.0)

    def restrict(self, lo: float, hi: float | None = None) -> "PowerLaw":
        hi = self.cutoff if hi is None else min(hi, self.cutoff)
        return PowerLaw(self.c, self.mu, hi, max(lo, self.floor))

    def scaled(self, s: float) -> "PowerLaw":
        return PowerLaw(self.c * s, self.mu, self.cutoff, self.floor)


@dataclass(frozen=True)
class Tabulated:
    """Piecewise-linear density through the table points, zero outside them."""

    lam: np.ndarray
    dens: np.ndarray
    source: str = field(default="", compare=False)

    def __post_init__(self):
        lam = _frozen(self.lam)
        dens = _frozen(self.dens)
        if lam.ndim != 1 or lam.shape != dens.shape or lam.size < 2:
            raise MeasureError("tabulated measure needs two equal-length 1-d columns, >= 2 rows")
        if not np.all(np.isfinite(lam)) or not np.all(np.isfinite(dens)):
            raise MeasureError("tabulated measure contains non-finite values")
        if lam[0] <= 0:
            raise MeasureError("tabulated abscissae must be strictly positive")
        if np.any(np.diff(lam) <= 0):
            raise MeasureError("tabulated abscissae must be strictly increasing")
        if np.any(dens < 0):
            raise MeasureError("tabulated densities must be nonnegative")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "dens", dens)

    kind = "tabulated"

    @property
    def cutoff(self) -> float:
        return float(self.lam[-1])

    @property
    def support(self) -> tuple[float, float]:
        return (float(self.lam[0]), float(self.lam[-1]))

    @property
    def breakpoints(self) -> np.ndarray:
        return self.lam

    def density(self, lam):
        return np.interp(lam, self.lam, self.dens, left=0.0, right=0.0)

    def restrict(self, lo: float, hi: float | None = None) -> "Tabulated":
        hi = self.cutoff if hi is None else hi
        inner = self.lam[(self.lam > lo) & (self.lam < hi)]
        lam = np.concatenate(([max(lo, self.lam[0])], inner, [min(hi, self.lam[-1])]))
        return Tabulated(lam, self.density(lam), self.source)

    def scaled(self, s: float) -> "Tabulated":
        return Tabulated(self.lam, self.dens * s, self.source)

    @classmethod
    def from_file(cls, path) -> "Tabulated":
        """Read a two-column whitespace table; ``#`` starts a comment."""
        try:
            data = np.loadtxt(path, comments="#", ndmin=2)
        except (OSError, ValueError) as exc:
            raise MeasureError(f"cannot read table {path}: {exc}") from exc
        if data.shape[1] != 2:
            raise MeasureError(f"table {path} must have exactly two columns")
        return cls(data[:, 0], data[:, 1], source=str(Path(path)))


@dataclass(frozen=True)
class Discrete:
    """Point masses ``weights[k]`` (``= |h_k|^2``) at ``omegas[k]``."""

    omegas: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        om = _frozen(np.atleast_1d(self.omegas))
        w = _frozen(np.atleast_1d(self.weights))
        if om.ndim != 1 or om.shape != w.shape or om.size == 0:
            raise MeasureError("discrete measure needs equal-length, non-empty frequency/weight lists")
        if not np.all(np.isfinite(om)) or not np.all(np.isfinite(w)):
            raise MeasureError("discrete measure contains non-finite values")
        if om[0] <= 0 or np.any(np.diff(om) <= 0):
            raise MeasureError("frequencies must be strictly positive and strictly increasing")
        if np.any(w < 0):
            raise MeasureError("weights must be nonnegative")
        object.__setattr__(self, "omegas", om)
        object.__setattr__(self, "weights", w)

    kind = "discrete"

    @classmethod
    def from_pairs(cls, pairs) -> "Discrete":
        arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])

    @property
    def n_modes(self) -> int:
        return int(self.omegas.size)

    @property
    def couplings(self) -> np.ndarray:
        """Mode amplitudes ``h_k = sqrt(w_k)``."""
        return np.sqrt(self.weights)

    @property
    def cutoff(self) -> float:
        return float(self.omegas[-1])

    def union(self, other: "Discrete") -> "Discrete":
        om = np.concatenate((self.omegas, other.omegas))
        if np.unique(om).size != om.size:
            raise MeasureError("union requires disjoint frequency sets")
        order = np.argsort(om)
        return Discrete(om[order], np.concatenate((self.weights, other.weights))[order])

    def scaled(self, s: float) -> "Discrete":
        return Discrete(self.omegas, self.weights * s)


SpectralMeasure = Union[PowerLaw, Tabulated, Discrete]


def is_continuous(sigma) -> bool:
    return isinstance(sigma, (PowerLaw, Tabulated))


# -- moments ----------------------------------------------------------------

def _powerlaw_segment(c, mu, p, lo, hi):
    """``int_lo^hi c λ^(2mu+p) dλ`` (elementwise over lo/hi arrays)."""
    e = 2 * mu + p + 1
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if abs(e) < 1e-14:
        with np.errstate(divide="ignore"):
            return c * (np.log(hi) - np.log(lo))
    if e < 0:
        with np.errstate(divide="ignore"):
            return c * (hi**e - lo**e) / e
    return c * (hi**e - lo**e) / e


def _linear_segment(x0, x1, y0, y1, p):
    """``int_x0^x1 λ^p (a + b λ) dλ`` for the line through (x0,y0), (x1,y1)."""
    b = (y1 - y0) / (x1 - x0)
    a = y0 - b * x0
    if p == 1:
        return a * (x1**2 - x0**2) / 2 + b * (x1**3 - x0**3) / 3
    if p == 0:
        return a * (x1 - x0) + b * (x1**2 - x0**2) / 2
    if p == -1:
        return a * np.log(x1 / x0) + b * (x1 - x0)
    # p == -2
    return a * (1 / x0 - 1 / x1) + b * np.log(x1 / x0)


def _tabulated_segment(tab: Tabulated, p, lo, hi):
    """Exact ``int_lo^hi λ^p dσ`` for the piecewise-linear interpolant."""
    lo = max(lo, tab.lam[0])
    hi = min(hi, tab.lam[-1])
    if hi <= lo:
        return 0.0
    inner = tab.lam[(tab.lam > lo) & (tab.lam < hi)]
    x = np.concatenate(([lo], inner, [hi]))
    y = tab.density(x)
    return float(np.sum(_linear_segment(x[:-1], x[1:], y[:-1], y[1:], p)))


def moment(sigma: SpectralMeasure, p: int) -> float:
    """``int λ^p dσ(λ)`` for ``p`` in {-2, -1, 0, 1}; ``inf`` when divergent."""
    if p not in ALLOWED_POWERS:
        raise MeasureError(f"moment power must be one of {ALLOWED_POWERS}, got {p!r}")
    if isinstance(sigma, Discrete):
        return float(np.sum(sigma.weights * sigma.omegas ** float(p)))
    if isinstance(sigma, PowerLaw):
        if sigma.floor == 0 and 2 * sigma.mu + p + 1 <= 0:
            return math.inf
        return float(_powerlaw_segment(sigma.c, sigma.mu, p, sigma.floor, sigma.cutoff))
    if isinstance(sigma, Tabulated):
        return _tabulated_segment(sigma, p, sigma.lam[0], sigma.lam[-1])
    raise MeasureError(f"not a spectral measure: {type(sigma).__name__}")


def segment_moment(sigma: SpectralMeasure, p: int, lo: float, hi: float) -> float:
    """``int_[lo, hi] λ^p dσ``; for Discrete the cell is half-open ``[lo, hi)``."""
    if isinstance(sigma, Discrete):
        sel = (sigma.omegas >= lo) & (sigma.omegas < hi)
        return float(np.sum(sigma.weights[sel] * sigma.omegas[sel] ** float(p)))
    if isinstance(sigma, PowerLaw):
        lo, hi = max(lo, sigma.floor), min(hi, sigma.cutoff)
        if hi <= lo:
            return 0.0
        if lo == 0 and 2 * sigma.mu + p + 1 <= 0:
            return math.inf
        return float(_powerlaw_segment(sigma.c, sigma.mu, p, lo, hi))
    return _tabulated_segment(sigma, p, lo, hi)


def mass(sigma: SpectralMeasure) -> float:
    return moment(sigma, 0)


# -- classification -----------------------------------------------------------

@dataclass(frozen=True)
class IRClassification:
    """Infrared verdict: ``Regular`` iff ``m_minus_2`` is finite."""

    cls: str
    m_minus_1: float
    m_minus_2: float
    exponent: float | None = None  # fitted 2*mu_hat (tabulated only)
    tolerance: float | None = None
    regime: str = "absolutely-continuous"

    @property
    def divergent(self) -> bool:
        return self.cls == "Divergent"

    def as_dict(self) -> dict:
        d = {
            "class": self.cls,
            "m_minus_1": self.m_minus_1,
            "m_minus_2": self.m_minus_2,
            "regime": self.regime,
        }
        if self.exponent is not None:
            d["fitted_exponent"] = self.exponent
            d["mu_hat"] = self.exponent / 2
            d["mu_tolerance"] = self.tolerance
        return d


def fit_ir_exponent(tab: Tabulated) -> float:
    """Log-log slope of the density over the lowest decade of the table (``2*mu_hat``)."""
    sel = (tab.lam <= 10 * tab.lam[0]) & (tab.dens > 0)
    if np.count_nonzero(sel) < MIN_FIT_POINTS:
        raise MeasureError(
            f"need >= {MIN_FIT_POINTS} positive-density points in the lowest decade "
            f"[{tab.lam[0]:g}, {10 * tab.lam[0]:g}] to fit the infrared exponent, "
            f"found {np.count_nonzero(sel)}"
        )
    slope, _ = np.polyfit(np.log(tab.lam[sel]), np.log(tab.dens[sel]), 1)
    return float(slope)


def classify(sigma: SpectralMeasure) -> IRClassification:
    m1 = moment(sigma, -1)
    if isinstance(sigma, Discrete):
        return IRClassification("Regular", m1, moment(sigma, -2), regime="pure-point")
    if isinstance(sigma, PowerLaw):
        m2 = moment(sigma, -2)
        return IRClassification("Regular" if math.isfinite(m2) else "Divergent", m1, m2)
    exponent = fit_ir_exponent(sigma)
    mu_hat = exponent / 2
    if mu_hat <= 0.5 + TABULATED_MU_TOLERANCE:
        # extrapolating λ^(2mu_hat - 2) to λ -> 0 is not integrable
        return IRClassification("Divergent", m1, math.inf, exponent, TABULATED_MU_TOLERANCE)
    return IRClassification("Regular", m1, moment(sigma, -2), exponent, TABULATED_MU_TOLERANCE)


def coupling_admissible(sigma: SpectralMeasure) -> tuple[bool, float]:
    """Check ``2 ||M^{-1/2} h|| <= 1``, i.e. ``4 m_{-1} <= 1``; returns (ok, 4 m_{-1})."""
    value = 4.0 * moment(sigma, -1)
    # the boundary case 4 m_{-1} = 1 is admissible; allow for roundoff there
    return bool(value <= 1.0 + 1e-12), value


# -- discretization -------------------------------------------------------------

def discretize(sigma: SpectralMeasure, n_modes: int, ir_floor: float) -> Discrete:
    """Lump ``σ`` restricted to ``[ir_floor, Λ]`` onto ``n_modes`` log-spaced cells.

    Each cell's mass sits at the cell's mass centroid, so both ``m_0`` and
    ``m_1`` of the restricted measure are reproduced exactly.
    """
    if not is_continuous(sigma):
        raise MeasureError("discretize needs a continuous (PowerLaw or Tabulated) measure")
    if n_modes < 1:
        raise MeasureError(f"n_modes must be >= 1, got {n_modes}")
    cutoff = sigma.cutoff
    if not 0 < ir_floor < cutoff:
        raise MeasureError(f"need 0 < ir_floor < cutoff ({cutoff}), got {ir_floor}")
    edges = np.geomspace(ir_floor, cutoff, n_modes + 1)
    edges[0], edges[-1] = ir_floor, cutoff
    lo, hi = edges[:-1], edges[1:]
    if isinstance(sigma, PowerLaw):
        lo_c, hi_c = np.maximum(lo, sigma.floor), np.minimum(hi, sigma.cutoff)
        ok = hi_c > lo_c
        w = np.where(ok, _powerlaw_segment(sigma.c, sigma.mu, 0, lo_c, np.where(ok, hi_c, lo_c + 1)), 0.0)
        m1 = np.where(ok, _powerlaw_segment(sigma.c, sigma.mu, 1, lo_c, np.where(ok, hi_c, lo_c + 1)), 0.0)
    else:
        w = np.array([_tabulated_segment(sigma, 0, a, b) for a, b in zip(lo, hi)])
        m1 = np.array([_tabulated_segment(sigma, 1, a, b) for a, b in zip(lo, hi)])
    w = np.maximum(w, 0.0)
    mid = np.sqrt(lo * hi)
    with np.errstate(invalid="ignore", divide="ignore"):
        omegas = np.where(w > 0, m1 / np.where(w > 0, w, 1.0), mid)
    omegas = np.clip(omegas, lo, hi)
    return Discrete(omegas, w)
