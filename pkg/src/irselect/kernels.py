"""Decoherence exponents, phase functions and the resulting kernels.

Conventions: ``χ(α, β; t) = tr_E(e^{i H_α t} e^{-i H_β t} ρ_E)`` with
``H_α = H_E + α Φ(h)``.  For a coherent, vacuum or thermal reference state

    χ(α, β; t) = exp(-(α-β)^2 ζ(t)) exp(i [θ(α, t) - θ(β, t)])

with ``ζ(t) = 2 ∫ λ^-2 sin^2(λt/2) dσ`` (times ``coth(βλ/2)`` at finite
temperature) and

    θ(α, t) = -α Im(f+g | (1 - e^{iMt}) M^-1 h) - α^2 ∫ λ^-2 (λt - sin λt) dσ.

The thermal state has the same phase as the vacuum.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import measures as ms
from .measures import Discrete, MeasureError, PowerLaw, Tabulated
from .quadrature import OscKernel, QuadResult, QuadratureError, integrate_kernel
from .states import Coherent, StateError, Superposed, Thermal, Vacuum

__all__ = [
    "zeta", "zeta_kms", "chi0", "phase_theta", "chi_superposed", "chi_analytic",
    "asymptotic_fit", "recurrence_scan", "point_measure_lower_bound", "az_chi",
    "DecoherenceProfile", "PhaseProfile", "FitRecord", "Revival", "AZMeasure",
    "decoherence_profile", "phase_profile", "QuadratureError",
]


# -- kernels -------------------------------------------------------------------

def _sin2_over(lam, t):
    return 2.0 * np.sin(0.5 * lam * t) ** 2 / lam**2


def _coth_half(lam, beta):
    # coth(x/2) = 1 + 2/(e^x - 1); expm1 overflow gives the correct limit 1
    with np.errstate(over="ignore"):
        return 1.0 + 2.0 / np.expm1(beta * lam)


def _x_minus_sin(x):
    x = np.asarray(x, dtype=float)
    x2 = x * x
    series = x * x2 / 6 * (1 - x2 / 20 * (1 - x2 / 42 * (1 - x2 / 72)))
    return np.where(np.abs(x) < 0.05, series, x - np.sin(x))


ZETA_KERNEL = OscKernel(
    name="zeta",
    value=_sin2_over,
    mean=lambda lam, t: 1.0 / lam**2,
    amp=lambda lam: 1.0 / lam**2,
    trig="cos",
    small_power=0.0,
    small_coef=lambda t: 0.5 * t * t,
)

PHASE_KERNEL = OscKernel(
    name="phase",
    value=lambda lam, t: _x_minus_sin(lam * t) / lam**2,
    mean=lambda lam, t: t / lam,
    amp=lambda lam: 1.0 / lam**2,
    trig="sin",
    small_power=1.0,
    small_coef=lambda t: t**3 / 6,
)


def kms_kernel(beta: float) -> OscKernel:
    return OscKernel(
        name=f"zeta_kms[beta={beta:g}]",
        value=lambda lam, t: _sin2_over(lam, t) * _coth_half(lam, beta),
        mean=lambda lam, t: _coth_half(lam, beta) / lam**2,
        amp=lambda lam: _coth_half(lam, beta) / lam**2,
        trig="cos",
        small_power=-1.0,
        small_coef=lambda t: t * t / beta,
    )


def integrate_measure(sigma, kernel: OscKernel, t: float) -> QuadResult:
    """``∫ kernel(λ, t) dσ(λ)`` for a continuous measure."""
    if isinstance(sigma, PowerLaw):
        ir_law = (sigma.c, 2 * sigma.mu) if sigma.floor == 0 else None
        return integrate_kernel(sigma.density, kernel, t, sigma.floor, sigma.cutoff, (), ir_law)
    if isinstance(sigma, Tabulated):
        lo, hi = sigma.support
        return integrate_kernel(sigma.density, kernel, t, lo, hi, sigma.lam[1:-1])
    raise MeasureError(f"not a continuous measure: {type(sigma).__name__}")


def _check_t(t):
    if not (t >= 0 and math.isfinite(t)):
        raise ValueError(f"time must be finite and nonnegative, got {t}")


def zeta(sigma, t: float) -> float:
    """Decoherence exponent ``2 ∫ λ^-2 sin^2(λt/2) dσ(λ)``."""
    _check_t(t)
    if t == 0:
        return 0.0
    if isinstance(sigma, Discrete):
        return float(np.sum(sigma.weights * _sin2_over(sigma.omegas, t)))
    return max(integrate_measure(sigma, ZETA_KERNEL, t).value, 0.0)


def zeta_kms(sigma, beta: float, t: float) -> float:
    """Thermal exponent ``2 ∫ λ^-2 sin^2(λt/2) coth(βλ/2) dσ(λ)``; ``beta=inf`` gives :func:`zeta`."""
    _check_t(t)
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if math.isinf(beta):
        return zeta(sigma, t)
    if t == 0:
        return 0.0
    if isinstance(sigma, Discrete):
        om = sigma.omegas
        return float(np.sum(sigma.weights * _sin2_over(om, t) * _coth_half(om, beta)))
    return max(integrate_measure(sigma, kms_kernel(beta), t).value, 0.0)


def lamb_integral(sigma, t: float) -> float:
    """``∫ λ^-2 (λt - sin λt) dσ = m_{-1} t - ∫ λ^-2 sin(λt) dσ``."""
    _check_t(t)
    if t == 0:
        return 0.0
    if isinstance(sigma, Discrete):
        om = sigma.omegas
        return float(np.sum(sigma.weights * _x_minus_sin(om * t) / om**2))
    return integrate_measure(sigma, PHASE_KERNEL, t).value


def chi0(delta_lambda: float, zeta_value: float) -> float:
    """Kernel modulus ``exp(-Δλ^2 ζ)``."""
    if zeta_value < 0:
        raise ValueError("zeta must be nonnegative")
    return math.exp(-(delta_lambda**2) * zeta_value)


def _displacement_overlap(sigma: Discrete, f, t) -> complex:
    """``(f | (1 - e^{iMt}) M^-1 h)`` over the discrete modes."""
    om = sigma.omegas
    v = (1.0 - np.exp(1j * om * t)) * sigma.couplings / om
    return complex(np.vdot(f, v))


def _as_displacement(sigma, f):
    if f is None:
        return None
    if not isinstance(sigma, Discrete):
        raise MeasureError("nonzero displacements are only supported for Discrete measures")
    f = np.asarray(f, dtype=complex).ravel()
    if f.size != sigma.n_modes:
        raise StateError(f"displacement has {f.size} entries, measure has {sigma.n_modes} modes")
    return f


def phase_theta(sigma, alpha: float, t: float, f=None, g=None, lamb: float | None = None) -> float:
    """Phase function ``θ(α, t)`` for the matrix element between ``T(g)1`` and ``T(f)1``.

    With only ``f`` given the diagonal element (``g = f``) is meant.  ``lamb``
    lets callers pass a precomputed :func:`lamb_integral`.
    """
    f = _as_displacement(sigma, f)
    g = _as_displacement(sigma, g) if g is not None else f
    if lamb is None:
        lamb = lamb_integral(sigma, t)
    theta = -(alpha**2) * lamb
    if f is not None:
        theta -= alpha * _displacement_overlap(sigma, f + g, t).imag
    return float(theta)


def superposition_norm(components: Superposed) -> float:
    return components.norm2()


def chi_superposed(sigma: Discrete, components, alpha: float, beta_sector: float, t: float,
                   return_norm: bool = False):
    """``<ψ| e^{iH_α t} e^{-iH_β t} |ψ> / <ψ|ψ>`` for ``ψ = Σ c_n exp(f_n)``.

    ``components`` is a :class:`Superposed` or a list of ``(c_n, f_n)`` pairs.
    """
    if not isinstance(sigma, Discrete):
        raise MeasureError("chi_superposed needs a Discrete measure")
    if not isinstance(components, Superposed):
        components = list(components)
        if not components:
            raise StateError("empty component list")
        components = Superposed([c for c, _ in components], [np.ravel(f) for _, f in components])
    c, F = components.coeffs, components.displacements
    if F.shape[1] != sigma.n_modes:
        raise StateError(f"displacements have {F.shape[1]} entries, measure has {sigma.n_modes} modes")
    norm2 = components.norm2()
    om, h = sigma.omegas, sigma.couplings
    lamb = lamb_integral(sigma, t)
    gamma = (alpha - beta_sector) * (np.exp(1j * om * t) - 1.0) * h / om
    v = (1.0 - np.exp(1j * om * t)) * h / om
    # log of <exp f_m | U | exp f_n> for all m (rows, bra) and n (cols, ket)
    fm, fn = F[:, None, :], F[None, :, :]
    inner = np.sum(fm.conj() * fn, axis=-1)
    diff = gamma[None, None, :] + fn - fm
    s = fm + fn
    lin = np.imag(np.sum(s.conj() * v, axis=-1))
    dtheta = -(alpha - beta_sector) * lin - (alpha**2 - beta_sector**2) * lamb
    log_el = (0.5 * np.sum(np.abs(fm) ** 2, axis=-1) + 0.5 * np.sum(np.abs(fn) ** 2, axis=-1)
              - 0.5 * np.sum(np.abs(diff) ** 2, axis=-1) + 1j * inner.imag + 1j * dtheta)
    value = complex(np.sum(c.conj()[:, None] * c[None, :] * np.exp(log_el)) / norm2)
    return (value, norm2) if return_norm else value


def chi_analytic(sigma, ref, alpha: float, beta_sector: float, t: float) -> complex:
    """Closed-form ``χ(α, β; t)`` for any supported reference state."""
    if isinstance(ref, Superposed):
        return chi_superposed(sigma, ref, alpha, beta_sector, t)
    if isinstance(ref, Thermal):
        z = zeta_kms(sigma, ref.beta, t)
        f = None
    elif isinstance(ref, (Vacuum, Coherent)):
        z = zeta(sigma, t)
        f = ref.f if isinstance(ref, Coherent) else None
    else:
        raise StateError(f"unsupported reference state {ref!r}")
    lamb = lamb_integral(sigma, t)
    dtheta = (phase_theta(sigma, alpha, t, f, lamb=lamb)
              - phase_theta(sigma, beta_sector, t, f, lamb=lamb))
    return complex(math.exp(-((alpha - beta_sector) ** 2) * z) * np.exp(1j * dtheta))


# -- profiles ------------------------------------------------------------------

@dataclass(frozen=True)
class DecoherenceProfile:
    times: np.ndarray
    zeta: np.ndarray
    beta: float = math.inf
    measure_ref: str = ""

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        z = np.array(self.zeta, dtype=float)
        if t.ndim != 1 or t.shape != z.shape or t.size == 0:
            raise ValueError("profile needs equal-length, non-empty time and zeta arrays")
        if np.any(t < 0) or np.any(np.diff(t) <= 0):
            raise ValueError("profile times must be nonnegative and strictly increasing")
        if np.any(z < 0):
            raise ValueError("zeta must be nonnegative")
        if t[0] == 0 and z[0] != 0:
            raise ValueError("zeta(0) must vanish")
        t.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "zeta", z)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "zeta", "beta"])
        for t, z in zip(self.times, self.zeta):
            w.writerow([f"{t:.16e}", f"{z:.16e}", f"{self.beta:.16e}"])
        return buf.getvalue()


@dataclass(frozen=True)
class PhaseProfile:
    times: np.ndarray
    theta: np.ndarray
    alpha: float
    displacement_ref: str | None = None


def decoherence_profile(sigma, times, beta: float = math.inf, measure_ref: str = "") -> DecoherenceProfile:
    times = np.asarray(times, dtype=float)
    z = [zeta_kms(sigma, beta, t) for t in times]
    return DecoherenceProfile(times, z, beta, measure_ref)


def phase_profile(sigma, alpha: float, times, f=None, displacement_ref=None) -> PhaseProfile:
    times = np.asarray(times, dtype=float)
    theta = np.array([phase_theta(sigma, alpha, t, f) for t in times])
    return PhaseProfile(times, theta, alpha, displacement_ref)


# -- asymptotics and recurrences ---------------------------------------------------------

@dataclass(frozen=True)
class FitRecord:
    model: str
    coefficient: float
    exponent: float | None
    intercept: float
    r2: float
    window: tuple[float, float]
    n_points: int
    monotone_tail: bool

    def as_dict(self) -> dict:
        return {
            "model": self.model, "coefficient": self.coefficient, "exponent": self.exponent,
            "intercept": self.intercept, "r2": self.r2, "window": list(self.window),
            "n_points": self.n_points, "monotone_tail": self.monotone_tail,
        }


class ProfileError(ValueError):
    pass


def _r2(y, yhat):
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def asymptotic_fit(profile: DecoherenceProfile, model: str) -> FitRecord:
    """Fit ``ζ ≈ a log t + b`` (``model="log"``) or ``ζ ≈ a t^p`` (``"power"``).

    Only the top two decades of the profile, ``t >= t_max/100``, enter the fit.
    """
    model = model.lower()
    if model not in ("log", "power"):
        raise ValueError(f"model must be 'log' or 'power', got {model!r}")
    t, z = profile.times, profile.zeta
    t_max = t[-1]
    positive = t[t > 0]
    if positive.size == 0 or positive[0] > t_max / 100 * (1 + 1e-12):
        raise ProfileError("profile must cover at least two decades of positive times")
    sel = t >= t_max / 100 * (1 - 1e-12)
    if np.count_nonzero(sel) < 3:
        raise ProfileError("need at least 3 profile points in the top two decades")
    x, y = np.log(t[sel]), z[sel]
    tail = np.diff(y)
    monotone = bool(np.all(tail >= -1e-12 * max(np.max(np.abs(y)), 1e-300)))
    if model == "log":
        slope, icpt = np.polyfit(x, y, 1)
        r2 = _r2(y, slope * x + icpt)
        return FitRecord("log", float(slope), None, float(icpt), r2,
                         (float(t[sel][0]), float(t_max)), int(sel.sum()), monotone)
    if np.any(y <= 0):
        raise ProfileError("power fit needs strictly positive zeta in the window")
    ly = np.log(y)
    slope, icpt = np.polyfit(x, ly, 1)
    r2 = _r2(ly, slope * x + icpt)
    return FitRecord("power", float(math.exp(icpt)), float(slope), float(icpt), r2,
                     (float(t[sel][0]), float(t_max)), int(sel.sum()), monotone)


@dataclass(frozen=True)
class Revival:
    time: float
    zeta: float


def recurrence_scan(profile: DecoherenceProfile, epsilon: float, evaluate=None) -> list[Revival]:
    """Dips of ``ζ`` below ``epsilon`` after it first rises above it.

    The run of sub-threshold points at the start of the grid is the initial
    transient, not a revival, and is skipped.  Each dip is reported at its
    minimum, refined by a parabola through the grid minimum and its
    neighbours, or, when ``evaluate(t) -> ζ(t)`` is given, by a bounded scalar
    minimization of ``evaluate`` on the bracketing grid interval.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    t, z = profile.times, profile.zeta
    below = z < epsilon
    out = []
    i, n = 0, t.size
    first = True
    while i < n:
        if not below[i]:
            first = False
            i += 1
            continue
        j = i
        while j + 1 < n and below[j + 1]:
            j += 1
        if first:
            first = False
            i = j + 1
            continue
        k = i + int(np.argmin(z[i:j + 1]))
        out.append(_refine_minimum(t, z, k, evaluate))
        i = j + 1
    return out


def _refine_minimum(t, z, k, evaluate=None) -> Revival:
    lo, hi = t[max(k - 1, 0)], t[min(k + 1, t.size - 1)]
    if evaluate is not None and hi > lo:
        from scipy.optimize import minimize_scalar

        res = minimize_scalar(evaluate, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-14 * max(abs(hi), 1.0)})
        best_t, best_z = (float(res.x), float(res.fun)) if res.fun < z[k] else (float(t[k]), float(z[k]))
        return Revival(best_t, max(best_z, 0.0))
    if 0 < k < t.size - 1:
        x0, x1, x2 = t[k - 1:k + 2]
        y0, y1, y2 = z[k - 1:k + 2]
        denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
        a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
        b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
        if a > 0:
            xv = -b / (2 * a)
            if x0 <= xv <= x2:
                c = y1 - a * x1**2 - b * x1
                return Revival(float(xv), float(max(a * xv**2 + b * xv + c, 0.0)))
    return Revival(float(t[k]), float(z[k]))


def point_measure_lower_bound(sigma: Discrete, t: float) -> float:
    """``(2/π^2) t^2 σ([0, π/t])``, a lower bound on ``ζ(t)``.

    From ``sin x >= 2x/π`` on ``[0, π/2]``.
    """
    if not isinstance(sigma, Discrete):
        raise MeasureError("point_measure_lower_bound needs a Discrete measure")
    if not t > 0:
        raise ValueError("t must be positive")
    cumulative = float(np.sum(sigma.weights[sigma.omegas <= math.pi / t]))
    return 2.0 / math.pi**2 * t * t * cumulative


# -- commuting (Araki-Zurek) model ---------------------------------------------------

@dataclass(frozen=True)
class AZMeasure:
    """Probability measure on the spectrum of ``G``: atoms or a piecewise-linear density."""

    x: np.ndarray
    weights: np.ndarray
    kind: str = "atoms"

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        w = np.array(self.weights, dtype=float)
        if x.ndim != 1 or x.shape != w.shape or x.size == 0:
            raise MeasureError("AZ measure needs equal-length, non-empty arrays")
        if self.kind not in ("atoms", "density"):
            raise MeasureError(f"unknown AZ measure kind {self.kind!r}")
        if np.any(w < 0):
            raise MeasureError("AZ measure weights must be nonnegative")
        if self.kind == "density" and (x.size < 2 or np.any(np.diff(x) <= 0)):
            raise MeasureError("density abscissae must be strictly increasing")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "weights", w)

    @classmethod
    def atoms(cls, x, w):
        return cls(x, w, "atoms")

    @classmethod
    def density(cls, x, p):
        return cls(x, p, "density")

    def mass(self) -> float:
        if self.kind == "atoms":
            return float(np.sum(self.weights))
        return float(np.trapezoid(self.weights, self.x))


def _linear_fourier(x0, x1, y0, y1, t):
    """``∫_x0^x1 (line through the end values) e^{ixt} dx`` per segment."""
    h = x1 - x0
    if t == 0:
        return 0.5 * h * (y0 + y1)
    e0, e1 = np.exp(1j * x0 * t), np.exp(1j * x1 * t)
    it = 1j * t
    slope = (y1 - y0) / h
    return (y1 * e1 - y0 * e0) / it - slope * (e1 - e0) / it**2


def az_chi(mu_measure: AZMeasure, t: float) -> complex:
    """Fourier transform ``∫ e^{iλt} dμ(λ)`` of a normalized measure."""
    total = mu_measure.mass()
    if abs(total - 1.0) > 1e-9:
        raise MeasureError(f"measure must be normalized, mass = {total!r}")
    x, w = mu_measure.x, mu_measure.weights
    if mu_measure.kind == "atoms":
        return complex(np.sum(w * np.exp(1j * x * t)))
    ht = np.abs(np.diff(x)) * abs(t)
    seg = _linear_fourier(x[:-1], x[1:], w[:-1], w[1:], t)
    if t != 0:
        # the closed form cancels badly for segments much shorter than 1/t
        short = ht < 1e-3
        if np.any(short):
            xm = 0.5 * (x[:-1] + x[1:])[short]
            h = np.diff(x)[short]
            y0, y1 = w[:-1][short], w[1:][short]
            # Simpson on a linear times exponential: error O((ht)^4)
            fm = 0.5 * (y0 + y1) * np.exp(1j * xm * t)
            seg[short] = h / 6 * (y0 * np.exp(1j * x[:-1][short] * t) + 4 * fm
                                  + y1 * np.exp(1j * x[1:][short] * t))
    return complex(np.sum(seg))
