"""Command-line scenario runner.

    irselect <subcommand> --config <path> [--set section.key=value ...] [--out <dir>]

Exit codes: 0 success, 1 validation error, 2 numerical failure (quadrature or
dimension budget), 3 audit violation.  Errors are reported as one JSON
object on standard error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import config as cf
from . import dynamics as dyn
from . import kernels as kn
from . import measures as ms
from . import oracle as orc
from .quadrature import QuadratureError
from .states import StateError

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_VIOLATION = 0, 1, 2, 3


class NumericFailure(RuntimeError):
    pass


def _finite(obj):
    """Non-finite floats become the strings "inf", "-inf", "nan" so the output is strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return cf.fmt(obj)
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _dumps(obj) -> str:
    return json.dumps(_finite(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


class Run:
    """Holds config, output directory and a progress record for error reports."""

    def __init__(self, cfg: dict, out: Path):
        self.cfg = cfg
        self.out = out
        self.progress: dict = {}
        self.files: list[str] = []

    @property
    def opts(self) -> dict:
        return cf.section(self.cfg, "run")

    def write(self, name: str, text: str):
        cf.write_atomic(self.out / name, text)
        self.files.append(name)


# -- subcommands ------------------------------------------------------------------------

def cmd_classify(run: Run) -> int:
    sigma = cf.build_measure(run.cfg)
    info = ms.classify(sigma).as_dict()
    ok, value = ms.coupling_admissible(sigma)
    info.update(admissible=ok, admissibility_value=value, m_0=ms.moment(sigma, 0))
    run.write("classify.json", _dumps(info))
    return EXIT_OK


def cmd_zeta(run: Run) -> int:
    sigma = cf.build_measure(run.cfg)
    times = cf.time_grid(run.cfg)
    betas = [math.inf] + [float(b) for b in run.opts.get("betas", [])]
    ref = run.opts.get("measure_ref", cf.section(run.cfg, "bath").get("preset", "bath"))
    chunks = []
    for k, beta in enumerate(betas):
        run.progress["betas_done"] = k
        prof = kn.decoherence_profile(sigma, times, beta, ref)
        text = prof.to_csv()
        chunks.append(text if k == 0 else text.split("\n", 1)[1])
    run.write("zeta.csv", "".join(chunks))
    return EXIT_OK


def cmd_fit(run: Run) -> int:
    sigma = cf.build_measure(run.cfg)
    model = run.opts.get("model")
    if model is None:
        model = "log" if isinstance(sigma, ms.PowerLaw) and sigma.mu == 0.5 else "power"
    times = cf.time_grid(run.cfg)
    prof = kn.decoherence_profile(sigma, times)
    rec = kn.asymptotic_fit(prof, model).as_dict()
    if isinstance(sigma, ms.PowerLaw):
        rec["expected_exponent"] = None if model == "log" else 1 - 2 * sigma.mu
        rec["expected_coefficient"] = sigma.c if model == "log" else None
    run.write("fit.json", _dumps(rec))
    return EXIT_OK


def _unique_pairs(sys_):
    vals = np.unique(sys_.sector_values)
    return [(a, b) for i, a in enumerate(vals) for b in vals[i + 1:]]


def cmd_evolve(run: Run) -> int:
    sigma = cf.build_measure(run.cfg)
    sys_ = cf.build_system(run.cfg)
    ref = cf.build_reference(run.cfg)
    rho0 = cf.build_initial_state(run.cfg, sys_, cf.generator(run.cfg))
    times = cf.time_grid(run.cfg)
    mats, norm_rows = [], []
    pairs = _unique_pairs(sys_)
    for k, t in enumerate(times):
        run.progress["times_done"] = k
        rho_t = dyn.evolve(rho0, sys_, sigma, t=t, ref=ref)
        mats.append(rho_t)
        for a, b in pairs:
            eps = 1e-12 * max(1.0, abs(a), abs(b))
            d1 = dyn.SectorSelection(a - eps, a + eps)
            d2 = dyn.SectorSelection(b - eps, b + eps)
            norm_rows.append([cf.fmt(t), cf.fmt(a), cf.fmt(b), cf.fmt(dyn.offdiag_norm(rho_t, d1, d2, sys_))])
    # [run] pairs = [[i, j], ...] restricts the entries written; default is the upper triangle
    sel = run.opts.get("pairs")
    sel = [tuple(int(v) for v in p) for p in sel] if sel is not None else None
    run.write("evolution.csv", dyn.evolution_csv(times, mats, sel))
    run.write("offdiag.csv", _csv(["t", "sector_a", "sector_b", "offdiag_norm"], norm_rows))
    return EXIT_OK


def _selections(run: Run, sys_):
    o = run.opts
    if "d1" in o and "d2" in o:
        return dyn.SectorSelection(*map(float, o["d1"])), dyn.SectorSelection(*map(float, o["d2"]))
    vals = np.unique(sys_.sector_values)
    if vals.size < 2:
        raise cf.ConfigError("audit needs at least two distinct sector values")
    mid = 0.5 * (vals[vals.size // 2 - 1] + vals[vals.size // 2])
    return dyn.SectorSelection(-math.inf, mid), dyn.SectorSelection(mid, math.inf)


def random_layout(rng: np.random.Generator, dim_max: int = 32):
    """Random system (dimension, energies, degenerate sector values) with a split of positive gap."""
    dim = int(rng.integers(2, dim_max + 1))
    n_sect = int(rng.integers(2, min(dim, 6) + 1))
    levels = np.sort(rng.uniform(-2.0, 2.0, n_sect))
    labels = np.concatenate((np.arange(n_sect), rng.integers(0, n_sect, dim - n_sect)))
    rng.shuffle(labels)
    sys_ = dyn.SuperselectedSystem(rng.uniform(-1.0, 1.0, dim), levels[labels])
    cut = int(rng.integers(1, n_sect))
    gap_lo, gap_hi = levels[cut - 1], levels[cut]
    b1 = gap_lo + (gap_hi - gap_lo) * rng.uniform(0.1, 0.5)
    a2 = b1 + (gap_hi - b1) * rng.uniform(0.0, 0.9)
    lo1 = levels[0] - 1.0 if rng.uniform() < 0.5 else levels[int(rng.integers(0, cut))] - 1e-9
    d1 = dyn.SectorSelection(lo1, b1)
    d2 = dyn.SectorSelection(a2, levels[-1] + 1.0)
    return sys_, d1, d2


def cmd_audit(run: Run) -> int:
    sigma = cf.build_measure(run.cfg)
    times = cf.time_grid(run.cfg)
    rng = cf.generator(run.cfg)
    samples = int(run.opts.get("samples", 200))
    beta = float(run.opts.get("beta", math.inf))
    zetas, lambs = [], []
    for k, t in enumerate(times):
        run.progress["zeta_points_done"] = k
        zetas.append(kn.zeta_kms(sigma, beta, t))
        lambs.append(kn.lamb_integral(sigma, t))
    report: dict
    if run.opts.get("layouts", "fixed") == "random":
        dim_max = int(run.opts.get("dim_max", 32))
        records, worst, violations = [], 0.0, 0
        for s in range(samples):
            run.progress["samples_done"] = s
            sys_, d1, d2 = random_layout(rng, dim_max)
            rho = dyn.random_density(rng, sys_.dim, int(rng.integers(1, sys_.dim + 1)))
            rep = dyn.bound_audit(rho, sys_, sigma, beta, d1, d2, times, zetas, lambs)
            worst = max(worst, rep.max_ratio)
            violations += rep.violations
            records.append({"dim": sys_.dim, **rep.as_dict()})
        report = {"samples": records, "max_ratio": worst, "violations": violations}
    else:
        sys_ = cf.build_system(run.cfg)
        d1, d2 = _selections(run, sys_)
        lhs = np.zeros(times.size)
        rhs = None
        delta = None
        violations = 0
        for s in range(samples):
            run.progress["samples_done"] = s
            rho = dyn.random_density(rng, sys_.dim, int(rng.integers(1, sys_.dim + 1)))
            rep = dyn.bound_audit(rho, sys_, sigma, beta, d1, d2, times, zetas, lambs)
            lhs = np.maximum(lhs, rep.lhs)
            rhs, delta = rep.rhs, rep.delta
            violations += rep.violations
        ratio = lhs / rhs
        report = {"delta": delta, "times": times.tolist(), "lhs": lhs.tolist(), "rhs": rhs.tolist(),
                  "max_ratio": float(ratio.max()), "samples": samples, "violations": violations}
    report["beta"] = beta
    report["seed"] = cf.section(run.cfg, "run").get("seed", 0)
    run.write("audit.json", _dumps(report))
    return EXIT_VIOLATION if report["violations"] else EXIT_OK


def cmd_oracle(run: Run) -> int:
    sigma = cf.build_measure(run.cfg)
    if not isinstance(sigma, ms.Discrete):
        raise cf.ConfigError("the oracle needs a discrete bath")
    sys_ = cf.build_system(run.cfg)
    ref = cf.build_reference(run.cfg)
    times = cf.time_grid(run.cfg)
    cutoff = int(run.opts.get("cutoff", 16))
    tol = float(run.opts.get("tolerance", 1e-6))
    fock = orc.TruncatedFock.from_measure(sigma, cutoff)
    pairs = [(a, b) for a, b in _unique_pairs(sys_)]
    pairs += [(b, a) for a, b in pairs]
    num, ana, t_rows = [], [], []
    for k, t in enumerate(times):
        run.progress["times_done"] = k
        for a, b in pairs:
            num.append(orc.chi_numeric(fock, a, b, t, ref))
            ana.append(kn.chi_analytic(sigma, ref, a, b, t))
            t_rows.append(t)
    config = {"modes": [[float(o), float(w)] for o, w in zip(sigma.omegas, sigma.weights)],
              "cutoff": cutoff, "reference": ref.tag, "sector_pairs": [[float(a), float(b)] for a, b in pairs]}
    report = orc.comparison_report(config, t_rows, num, ana)
    if run.opts.get("evolution", True):
        rho0 = cf.build_initial_state(run.cfg, sys_, cf.generator(run.cfg))
        worst = 0.0
        for t in times:
            a = dyn.evolve(rho0, sys_, sigma, t=t, ref=ref).data
            b = orc.reduced_dynamics_numeric(rho0, sys_, fock, ref, t).data
            worst = max(worst, float(np.max(np.abs(a - b))))
        report["evolution_max_abs_diff"] = worst
    run.write("oracle.json", _dumps(report))
    bad = report["max_abs_diff"] > tol or report.get("evolution_max_abs_diff", 0.0) > tol
    return EXIT_VIOLATION if bad else EXIT_OK


def cmd_diverge_study(run: Run) -> int:
    sigma = cf.build_measure(run.cfg)
    if not ms.is_continuous(sigma):
        raise cf.ConfigError("diverge-study needs a continuous bath")
    eps_list = [float(e) for e in run.opts.get("epsilons", [1e-2, 1e-3, 1e-4, 1e-5, 1e-6])]
    per_decade = int(run.opts.get("modes_per_decade", 16))
    rows = []
    for k, eps in enumerate(eps_list):
        run.progress["epsilons_done"] = k
        n = max(1, int(math.ceil(per_decade * math.log10(sigma.cutoff / eps))))
        diag = orc.ground_state_diagnostics(ms.discretize(sigma, n, eps))
        rows.append([cf.fmt(eps), n, cf.fmt(diag["bare_boson_number"]), cf.fmt(diag["vacuum_overlap"])])
    run.write("diverge.csv", _csv(["epsilon", "n_modes", "bare_boson_number", "vacuum_overlap"], rows))
    return EXIT_OK


def random_sphi_case(rng: np.random.Generator, dim_max: int = 24):
    """Random nuclear ``S``, sorted points and half-line selections ``(-inf, b1)``, ``[a2, inf)``."""
    dim = int(rng.integers(2, dim_max + 1))
    x = np.sort(rng.uniform(-2.0, 2.0, dim))
    S = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    b1 = float(rng.uniform(x[0], x[-1]))
    a2 = b1 + float(rng.uniform(0.0, 1.0))
    return x, S, dyn.SectorSelection(-math.inf, b1), dyn.SectorSelection(a2, math.inf)


def cmd_sphi(run: Run) -> int:
    rng = cf.generator(run.cfg)
    samples = int(run.opts.get("samples", 500))
    zetas = [float(z) for z in run.opts.get("zetas", [0.1, 1.0, 10.0])]
    dim_max = int(run.opts.get("dim_max", 24))
    checks, failures = [], 0
    for s in range(samples):
        run.progress["samples_done"] = s
        x, S, d1, d2 = random_sphi_case(rng, dim_max)
        for z in zetas:
            res = dyn.sphi_bound_check(x, S, dyn.gaussian_envelope(z), d1, d2)
            failures += not res.holds
            checks.append({"sample": s, "zeta": z, "dim": int(x.size), **res.as_dict()})
    run.write("sphi.json", _dumps({"checks": checks, "all_hold": failures == 0, "violations": failures}))
    return EXIT_VIOLATION if failures else EXIT_OK


COMMANDS = {
    "classify": cmd_classify,
    "zeta": cmd_zeta,
    "fit": cmd_fit,
    "evolve": cmd_evolve,
    "audit": cmd_audit,
    "oracle": cmd_oracle,
    "diverge-study": cmd_diverge_study,
    "sphi": cmd_sphi,
}


def _error(kind: str, exc: BaseException, code: int, progress=None) -> int:
    payload = {"error": kind, "message": str(exc), "exit_code": code}
    if progress:
        payload["progress"] = progress
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="irselect", description="Decoherence kernels and reduced dynamics scenarios.")
    p.add_argument("subcommand", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="TOML scenario file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    p.add_argument("--out", default=None, help="output directory (default: [run] out, else '.')")
    return p


def main(argv=None) -> int:
    try:
        args = parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    run = None
    try:
        cfg = cf.load(args.config, args.overrides)
        out = Path(args.out or cf.section(cfg, "run").get("out", "."))
        run = Run(cfg, out)
        return COMMANDS[args.subcommand](run)
    except (QuadratureError, orc.BudgetError, NumericFailure) as exc:
        return _error(type(exc).__name__, exc, EXIT_NUMERIC, run.progress if run else None)
    except (cf.ConfigError, ms.MeasureError, StateError, dyn.DynamicsError, ValueError, OSError) as exc:
        return _error(type(exc).__name__, exc, EXIT_INVALID, run.progress if run else None)


if __name__ == "__main__":
    sys.exit(main())
