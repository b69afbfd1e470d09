"""Panel quadrature for oscillatory integrals against a spectral density.

Integrals have the form ``I(t) = int_lo^hi ρ(λ) k(λ, t) dλ`` where ``k``
oscillates with period ``2π/t`` and may carry an integrable power
singularity at ``λ = 0``.  Two routes are used:

* panel route -- Gauss-Legendre (15 nodes) on panels no wider than ``π/t``,
  geometrically graded panels toward ``λ = 0`` with the last sliver added in
  closed form from the leading small-``λ`` behaviour; accuracy is certified
  by comparing against the same sum with every panel bisected;
* split route (many oscillations) -- the panel route on ``[lo, λ_c]`` with
  ``λ_c`` a few hundred half-periods above ``lo``, and on ``[λ_c, hi]`` the
  split ``k = mean(λ, t) - amp(λ) trig(λ t)`` whose non-oscillatory part goes
  through graded Gauss-Legendre panels and whose Fourier part goes through
  QUADPACK's QAWO (``scipy.integrate.quad`` with a ``cos``/``sin`` weight).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(15)

REL_TOL = 1e-10
ABS_TOL = 1e-14
GRADING_LEVELS = 48
MAX_REFINEMENTS = 4
# beyond this many half-period panels the split route is used
SPLIT_PANELS = 1 << 14
LOW_BAND_HALF_PERIODS = 256
MAX_PANELS = 1 << 22


class QuadratureError(RuntimeError):
    """Quadrature did not reach its tolerance within the panel budget."""

    def __init__(self, message: str, estimate: float = math.nan, value: float = math.nan):
        super().__init__(f"{message} (achieved error estimate {estimate:.3e})")
        self.estimate = estimate
        self.value = value


@dataclass(frozen=True)
class OscKernel:
    """Integration kernel ``k(λ, t) = mean(λ, t) - amp(λ) * trig(λ t)``.

    ``small_power``/``small_coef`` give ``k ~ small_coef(t) λ**small_power``
    as ``λ -> 0``; they are used for the closed-form sliver next to zero.
    """

    name: str
    value: Callable[[np.ndarray, float], np.ndarray]
    mean: Callable[[np.ndarray, float], np.ndarray]
    amp: Callable[[np.ndarray], np.ndarray]
    trig: str
    small_power: float
    small_coef: Callable[[float], float]


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    panels: int
    route: str


def _tol(value: float, rel=REL_TOL, abs_=ABS_TOL) -> float:
    return max(rel * abs(value), abs_)


def gl_panels(f, edges: np.ndarray) -> float:
    """Sum of 15-point Gauss-Legendre rules over the panels ``edges[i]..edges[i+1]``."""
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    lam = (0.5 * (a + b))[:, None] + half[:, None] * GL_NODES[None, :]
    return float(np.sum(half * (f(lam) @ GL_WEIGHTS)))


def bisect(edges: np.ndarray) -> np.ndarray:
    mid = 0.5 * (edges[:-1] + edges[1:])
    out = np.empty(2 * edges.size - 1)
    out[0::2] = edges
    out[1::2] = mid
    return out


def _merge(edges: np.ndarray, extra, lo: float, hi: float) -> np.ndarray:
    extra = np.asarray(extra, dtype=float)
    extra = extra[(extra > lo) & (extra < hi)]
    return np.unique(np.concatenate((edges, extra)))


def _graded_head(e1: float) -> np.ndarray:
    return e1 * 2.0 ** -np.arange(GRADING_LEVELS, -1, -1, dtype=float)


def panel_integral(
    integrand,
    lo: float,
    hi: float,
    t: float,
    breakpoints=(),
    ir_sliver: Callable[[float], float] | None = None,
    max_panels: int = MAX_PANELS,
    rel_tol: float = REL_TOL,
    abs_tol: float = ABS_TOL,
) -> QuadResult:
    """Integrate ``integrand`` on ``[lo, hi]`` with panels no wider than ``π/t``.

    ``ir_sliver(eps)`` must return ``int_0^eps integrand`` when ``lo == 0``
    and the integrand is singular there.
    """
    if hi <= lo:
        return QuadResult(0.0, 0.0, 0, "panel")
    width = math.pi / t if t > 0 else hi - lo
    n = max(1, math.ceil((hi - lo) / width))
    if n > max_panels:
        raise QuadratureError(f"{n} panels exceed the budget of {max_panels}")
    edges = _merge(np.linspace(lo, hi, n + 1), breakpoints, lo, hi)
    sliver = 0.0
    if lo == 0.0 and ir_sliver is not None:
        head = _graded_head(edges[1])
        sliver = ir_sliver(head[0])
        edges = np.concatenate((head, edges[2:]))
    elif lo > 0 and edges[1] > 2 * lo:
        # a floor close to 0 still sees the λ^p behaviour; grade toward it too
        n_geo = math.ceil(math.log2(edges[1] / lo))
        edges = np.concatenate((np.geomspace(lo, edges[1], n_geo + 1)[:-1], edges[1:]))
    coarse = gl_panels(integrand, edges) + sliver
    err = math.inf
    for _ in range(MAX_REFINEMENTS):
        if 2 * edges.size > max_panels:
            break
        edges = bisect(edges)
        fine = gl_panels(integrand, edges) + sliver
        err = abs(fine - coarse)
        coarse = fine
        if err <= _tol(fine, rel_tol, abs_tol):
            return QuadResult(fine, err, edges.size - 1, "panel")
    raise QuadratureError("panel quadrature did not converge", err, coarse)


def integrate_kernel(
    density,
    kernel: OscKernel,
    t: float,
    lo: float,
    hi: float,
    breakpoints=(),
    ir_law: tuple[float, float] | None = None,
    max_panels: int = MAX_PANELS,
) -> QuadResult:
    """``int_lo^hi density(λ) kernel(λ, t) dλ``.

    ``ir_law = (c, p)`` states ``density ~ c λ**p`` at ``λ -> 0`` (needed
    when ``lo == 0``).
    """
    if t == 0 or hi <= lo:
        return QuadResult(0.0, 0.0, 0, "trivial")

    def integrand(lam):
        return density(lam) * kernel.value(lam, t)

    sliver = None
    if lo == 0.0:
        if ir_law is None:
            raise ValueError("a density starting at 0 needs its infrared power law")
        c, p = ir_law
        q = p + kernel.small_power + 1.0
        if q <= 0:
            raise QuadratureError(f"integrand ~ λ^{q - 1:g} is not integrable at 0")
        coef = kernel.small_coef(t)

        def sliver(eps):
            return c * coef * eps**q / q

    n_half_periods = (hi - lo) * t / math.pi
    if n_half_periods <= SPLIT_PANELS:
        return panel_integral(integrand, lo, hi, t, breakpoints, sliver, max_panels)

    lam_c = lo + LOW_BAND_HALF_PERIODS * math.pi / t
    low = panel_integral(integrand, lo, lam_c, t, breakpoints, sliver, max_panels)

    # geometric panels (ratio <= 2) resolve the λ^-2 growth toward λ_c
    n_geo = max(1, math.ceil(math.log2(hi / lam_c)))
    edges = _merge(np.geomspace(lam_c, hi, n_geo + 1), breakpoints, lam_c, hi)
    edges[0], edges[-1] = lam_c, hi

    def mean_part(lam):
        return density(lam) * kernel.mean(lam, t)

    mean = panel_integral(mean_part, lam_c, hi, 0.0, edges[1:-1], None, max_panels)

    def amp(lam):
        return float(density(np.array([lam]))[0] * kernel.amp(np.array([lam]))[0])

    osc, osc_err = 0.0, 0.0
    target = _tol(low.value + mean.value) / 4
    per_panel = target / (edges.size - 1)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        for a, b in zip(edges[:-1], edges[1:]):
            try:
                val, err = integrate.quad(
                    amp, a, b, weight=kernel.trig, wvar=t,
                    epsabs=per_panel, epsrel=1e-13, limit=400,
                )
            except integrate.IntegrationWarning as exc:
                raise QuadratureError(f"oscillatory panel [{a:g}, {b:g}] failed: {exc}") from exc
            osc += val
            osc_err += err
    value = low.value + mean.value - osc
    error = low.error + mean.error + osc_err
    if error > _tol(value):
        raise QuadratureError("split quadrature did not converge", error, value)
    return QuadResult(value, error, low.panels + mean.panels + edges.size - 1, "split")
