"""Scenario files: TOML with ``[bath] [system] [reference] [time] [run]`` sections."""
from __future__ import annotations

import copy
import math
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dynamics import DensityMatrix, SuperselectedSystem
from .measures import Discrete, MeasureError, PowerLaw, Tabulated
from .states import Coherent, Superposed, Thermal, Vacuum

SECTIONS = ("bath", "system", "reference", "time", "run")

BATH_PRESETS = {
    "ohmic": {"kind": "powerlaw", "c": 0.05, "mu": 0.5, "cutoff": 1.0},
    # admissible (c * cutoff = 0.2) yet decoheres fast enough that exp(-zeta(1e4)) << 1e-4
    "ohmic-strong": {"kind": "powerlaw", "c": 4.0, "mu": 0.5, "cutoff": 0.05},
    "subohmic": {"kind": "powerlaw", "c": 0.05, "mu": 0.25, "cutoff": 1.0},
    "subohmic-0.4": {"kind": "powerlaw", "c": 0.05, "mu": 0.4, "cutoff": 1.0},
    "regular": {"kind": "powerlaw", "c": 0.05, "mu": 1.0, "cutoff": 1.0},
    "two-mode": {"kind": "discrete", "modes": [[1.0, 0.1], [2.3, 0.2]]},
}


class ConfigError(ValueError):
    pass


def load(path, overrides=()) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open("rb") as fh:
            cfg = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    unknown = set(cfg) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    cfg = apply_overrides(cfg, overrides)
    cfg["_base"] = str(path.parent.resolve())
    return cfg


def _parse_value(raw: str):
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``section.key=value`` overrides; values use TOML syntax, bare words are strings."""
    cfg = copy.deepcopy(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        if len(parts) != 2 or parts[0] not in SECTIONS:
            raise ConfigError(f"override key must be <section>.<key> with a known section, got {key!r}")
        cfg.setdefault(parts[0], {})[parts[1]] = _parse_value(raw.strip())
    return cfg


def section(cfg: dict, name: str) -> dict:
    val = cfg.get(name, {})
    if not isinstance(val, dict):
        raise ConfigError(f"[{name}] must be a table")
    return val


def _require(sec: dict, key: str, name: str):
    if key not in sec:
        raise ConfigError(f"[{name}] is missing '{key}'")
    return sec[key]


def build_measure(cfg: dict):
    bath = dict(section(cfg, "bath"))
    if "preset" in bath:
        preset = bath.pop("preset")
        if preset not in BATH_PRESETS:
            raise ConfigError(f"unknown bath preset {preset!r}; choose from {sorted(BATH_PRESETS)}")
        bath = {**BATH_PRESETS[preset], **bath}
    kind = _require(bath, "kind", "bath")
    try:
        if kind == "powerlaw":
            return PowerLaw(float(_require(bath, "c", "bath")), float(_require(bath, "mu", "bath")),
                            float(_require(bath, "cutoff", "bath")), float(bath.get("floor", 0.0)))
        if kind == "discrete":
            return Discrete.from_pairs(_require(bath, "modes", "bath"))
        if kind == "tabulated":
            p = Path(_require(bath, "table_file", "bath"))
            if not p.is_absolute():
                p = Path(cfg.get("_base", ".")) / p
            if not p.is_file():
                raise ConfigError(f"table file not found: {p}")
            return Tabulated.from_file(p)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, (ConfigError, MeasureError)):
            raise
        raise ConfigError(f"invalid [bath] entry: {exc}") from exc
    raise ConfigError(f"unknown bath kind {kind!r}")


def build_system(cfg: dict) -> SuperselectedSystem:
    s = section(cfg, "system")
    preset = s.get("preset")
    if preset == "spin":
        return SuperselectedSystem.spin(float(s.get("alpha", 1.0)), float(s.get("beta", 0.5)))
    if preset == "particle-grid":
        return SuperselectedSystem.particle_grid(float(s.get("p_max", 1.0)), int(s.get("points", 9)),
                                                 float(s.get("mass", 1.0)))
    if preset is not None:
        raise ConfigError(f"unknown system preset {preset!r}")
    return SuperselectedSystem(_require(s, "energies", "system"), _require(s, "sector_values", "system"))


def _complex_vector(raw) -> np.ndarray:
    """Entries are numbers or ``[re, im]`` pairs."""
    out = []
    for x in raw:
        if isinstance(x, (list, tuple)):
            if len(x) != 2:
                raise ConfigError(f"complex entries must be [re, im], got {x!r}")
            out.append(complex(float(x[0]), float(x[1])))
        else:
            out.append(complex(float(x)))
    return np.array(out, dtype=complex)


def build_reference(cfg: dict):
    r = section(cfg, "reference")
    kind = r.get("kind", "vacuum")
    if kind == "vacuum":
        return Vacuum()
    if kind == "coherent":
        return Coherent(_complex_vector(_require(r, "f", "reference")))
    if kind == "thermal":
        return Thermal(float(_require(r, "beta", "reference")))
    if kind == "superposed":
        comps = _require(r, "components", "reference")
        if not isinstance(comps, list) or not comps:
            raise ConfigError("[reference] components must be a non-empty array of tables")
        coeffs = [_complex_vector([c.get("c", 1.0)])[0] for c in comps]
        disp = [_complex_vector(c["f"]) for c in comps]
        return Superposed(coeffs, disp)
    raise ConfigError(f"unknown reference kind {kind!r}")


def build_initial_state(cfg: dict, sys_: SuperselectedSystem, rng=None) -> DensityMatrix:
    s = section(cfg, "system")
    rho0 = s.get("rho0", "plus")
    if rho0 == "plus":
        return DensityMatrix.pure(np.ones(sys_.dim))
    if rho0 == "random":
        from .dynamics import random_density

        if rng is None:
            raise ConfigError("a random initial state needs a seeded generator")
        return random_density(rng, sys_.dim)
    if isinstance(rho0, list):
        psi = _complex_vector(rho0)
        if psi.size != sys_.dim:
            raise ConfigError("[system] rho0 state vector has the wrong length")
        return DensityMatrix.pure(psi)
    raise ConfigError(f"unknown initial state {rho0!r}")


def time_grid(cfg: dict) -> np.ndarray:
    t = section(cfg, "time")
    t_min = float(t.get("t_min", 0.0))
    t_max = float(_require(t, "t_max", "time"))
    n = int(t.get("points", 101))
    spacing = t.get("spacing", "lin")
    if n < 1 or t_max < t_min or t_min < 0:
        raise ConfigError("time grid needs points >= 1 and 0 <= t_min <= t_max")
    if spacing == "lin":
        return np.linspace(t_min, t_max, n)
    if spacing == "log":
        if t_min <= 0:
            # a log grid starting at 0: keep t=0 and log-space the rest from t_max/1e6
            rest = np.geomspace(t_max * 1e-6, t_max, n - 1) if n > 1 else np.array([])
            return np.concatenate(([0.0], rest))
        return np.geomspace(t_min, t_max, n)
    raise ConfigError(f"time spacing must be 'lin' or 'log', got {spacing!r}")


def generator(cfg: dict) -> np.random.Generator:
    """Philox counter-based generator keyed by ``[run] seed`` (a 64-bit integer)."""
    seed = section(cfg, "run").get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("[run] seed must be an integer in [0, 2^64)")
    return np.random.Generator(np.random.Philox(key=seed))


def write_atomic(path: Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(x: float) -> str:
    return f"{x:.16e}" if math.isfinite(x) else ("inf" if x > 0 else ("-inf" if x < 0 else "nan"))
