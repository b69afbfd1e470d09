"""Reference states of the boson field."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

MAX_SUPERPOSED = 8


class StateError(ValueError):
    pass


@dataclass(frozen=True)
class Vacuum:
    tag = "vacuum"


@dataclass(frozen=True)
class Coherent:
    """Normalized exponential vector ``T(f) 1_vac`` over discrete modes."""

    f: np.ndarray

    def __post_init__(self):
        f = np.array(np.atleast_1d(self.f), dtype=complex)
        if f.ndim != 1 or not np.all(np.isfinite(f)):
            raise StateError("coherent displacement must be a finite 1-d complex vector")
        f.setflags(write=False)
        object.__setattr__(self, "f", f)

    tag = "coherent"


@dataclass(frozen=True)
class Thermal:
    """KMS state at inverse temperature ``beta``."""

    beta: float

    def __post_init__(self):
        if not (self.beta > 0):
            raise StateError(f"thermal state needs beta > 0, got {self.beta}")

    tag = "thermal"


@dataclass(frozen=True)
class Superposed:
    """Projection onto ``psi = sum_n c_n exp(f_n)`` (unnormalized exponential vectors).

    ``displacements`` has one row per component.  The state is normalized by
    ``sum_{m,n} conj(c_m) c_n exp((f_m | f_n))`` wherever it is used.
    """

    coeffs: np.ndarray
    displacements: np.ndarray

    def __post_init__(self):
        c = np.array(np.atleast_1d(self.coeffs), dtype=complex)
        f = np.array(self.displacements, dtype=complex)
        if f.ndim == 1:
            f = f[None, :]
        if c.size == 0:
            raise StateError("superposition needs at least one component")
        if c.size > MAX_SUPERPOSED:
            raise StateError(f"at most {MAX_SUPERPOSED} superposed components, got {c.size}")
        if f.ndim != 2 or f.shape[0] != c.size:
            raise StateError("need one displacement vector per coefficient, all of equal length")
        c.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "displacements", f)

    tag = "superposed"

    @property
    def n_modes(self) -> int:
        return self.displacements.shape[1]

    def gram(self) -> np.ndarray:
        """``exp((f_m | f_n))`` for all component pairs."""
        f = self.displacements
        return np.exp(f.conj() @ f.T)

    def norm2(self) -> float:
        val = np.real(self.coeffs.conj() @ self.gram() @ self.coeffs)
        if not val > 0 or not math.isfinite(val):
            raise StateError("superposition has zero or non-finite norm")
        return float(val)


ReferenceState = Union[Vacuum, Coherent, Thermal, Superposed]


def displacement_of(ref, n_modes: int) -> np.ndarray | None:
    """Coherent displacement vector, or None for the vacuum / thermal states."""
    if isinstance(ref, Coherent):
        if ref.f.size != n_modes:
            raise StateError(f"displacement has {ref.f.size} entries, bath has {n_modes} modes")
        return ref.f
    return None
