"""Batch front door: one command per process, JSON records plus CSV tables.

Usage:  padicgas [--config PATH] [--mode exact|float] [--seed U64]
                 [--threads N] [--out DIR] [--stable] COMMAND

Commands: constants, lemma1, energy, frostman, spinglass, place, minimize,
gamma, suite.  Exit codes: 0 success, 1 validation failure, 2 check or
acceptance failure, 3 resource cap exceeded.

Every run writes <out>/<command>_result.json with the resolved configuration
echoed back; re-running with identical config and seed reproduces the record
byte for byte when --stable suppresses timing fields.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from . import __version__
from .energy import (CellDensity, DiscreteMeasure, Potential,
                     electrostatic_potential, frostman_check, hamiltonian,
                     mean_field_energy, mutual_energy, positivity_suite)
from .errors import (CapacityError, CheckError, DomainError, PadicGasError,
                     ParameterError, PrecisionError, ScalarModeError)
from .minimize import (AnnealSchedule, anneal_minimize, gamma_experiment,
                       recovery_place, sphere_support_histogram, weak_gap)
from .padic import (PadicPoint, SeededRng, cell_count, enumerate_cells,
                    sample_uniform)
from .radial import (KernelParams, ball_overlap_closed, ball_overlap_tail,
                     ball_overlap_truncated, ball_volume, capacity_ball,
                     gamma_factor, green_constant, shell_integral,
                     sphere_volume)
from .scalar import EXACT, FLOAT, Scalar
from .spinglass import continuum_limit_study

SCHEMA_VERSION = 1

COLUMN_CONTRACTS = {
    "lemma1": ["s_exponent", "closed", "truncated", "abs_error"],
    "spinglass": ["l", "energy", "gap"],
    "minimize": ["stage", "temperature", "H", "best_H"],
    "gamma": ["n", "lattice_depth", "achieved", "reference", "gap",
              "certified"],
    "place": ["ball_index", "floor", "eps", "count"],
}

DEFAULT_CONFIG = {
    "p": 2, "d": 2, "alpha": 1, "mode": EXACT,
    "L": 0, "l": 2, "r": 0,
    "seed": 42, "threads": 1,
    "V": {"kind": "confining", "v0": "1", "L": 0},
    "measure": {"kind": "uniform", "L": 0, "l": 2},
    "s_exponents": [0, 1, 2], "T": 20,
    "n": 4, "n_sequence": [4, 16],
    "schedule": {},
    "sample_depth": None, "tolerance": None,
    "trials": 100, "depth": 3,
    "M": 2, "K": 2, "count": 1, "phi_trials": 5,
    "l_range": [0, 1, 2, 3],
    "reference": None,
    "out": ".",
}


def _scalar_from_config(value, mode: str) -> Scalar:
    if isinstance(value, str):
        if value == "inf":
            return Scalar.infinity(mode)
        if mode == EXACT:
            return Scalar.exact(Fraction(value))
        return Scalar.approx(float(Fraction(value)))
    if mode == EXACT:
        if isinstance(value, float) and not value.is_integer():
            raise ParameterError(f"exact mode needs rational text, got {value}")
        return Scalar.exact(int(value))
    return Scalar.approx(float(value))


def _params_from_config(cfg: dict) -> KernelParams:
    mode = cfg["mode"]
    alpha = cfg["alpha"]
    if mode == EXACT:
        if isinstance(alpha, float):
            if not alpha.is_integer():
                raise ParameterError("exact mode requires an integer alpha")
            alpha = int(alpha)
    else:
        alpha = float(alpha)
    return KernelParams(cfg["p"], cfg["d"], alpha, mode)


def _potential_from_config(cfg: dict, params: KernelParams) -> Potential:
    spec = cfg["V"]
    kind = spec.get("kind", "confining")
    mode = params.mode
    if kind == "confining":
        return Potential.confining(_scalar_from_config(spec.get("v0", "1"), mode),
                                   L=spec.get("L", 0))
    if kind == "radial":
        spheres = [(int(e), _scalar_from_config(v, mode))
                   for e, v in spec.get("sphere_values", [])]
        outside = spec.get("outside", "inf")
        return Potential.radial(spec["L"], _scalar_from_config(spec["core_value"], mode),
                                spec.get("core_exponent", 0), spheres,
                                _scalar_from_config(outside, mode))
    if kind == "cells":
        values = tuple(_scalar_from_config(v, mode) for v in spec["values"])
        table = CellDensity(params.p, params.d, spec["L"], spec["l"], values)
        return Potential.from_cells(table)
    raise ParameterError(f"unknown potential kind {kind!r}")


def _measure_from_config(spec: dict, params: KernelParams) -> CellDensity:
    kind = spec.get("kind", "uniform")
    if kind == "uniform":
        return CellDensity.uniform_probability(params.p, params.d,
                                               spec.get("L", 0), spec.get("l", 2),
                                               params.mode)
    if kind == "cells":
        values = tuple(_scalar_from_config(v, params.mode) for v in spec["values"])
        return CellDensity(params.p, params.d, spec["L"], spec["l"], values)
    raise ParameterError(f"unknown measure kind {kind!r}")


def _schedule_from_config(cfg: dict) -> AnnealSchedule:
    spec = dict(cfg.get("schedule") or {})
    spec.setdefault("seed", cfg["seed"])
    return AnnealSchedule(t0=spec.get("t0", 1.0), decay=spec.get("decay", 0.95),
                          steps_per_temp=spec.get("steps_per_temp"),
                          sweeps=spec.get("sweeps", 60), seed=spec["seed"])


# ---------------------------------------------------------------------------
# command handlers: each returns (outputs, tables, passed)
# ---------------------------------------------------------------------------


def _cmd_constants(cfg: dict):
    params = _params_from_config(cfg)
    r = cfg["r"]
    outputs = {
        "gamma_factor": gamma_factor(params).to_json(),
        "green_constant": green_constant(params).to_json(),
        "capacity_ball": capacity_ball(params, r).to_json(),
        "shell_integral": shell_integral(params, r).to_json(),
        "ball_volume": ball_volume(params, r).to_json(),
        "sphere_volume": sphere_volume(params, r).to_json(),
        "r": r,
    }
    return outputs, {}, True


def _cmd_lemma1(cfg: dict):
    params = _params_from_config(cfg)
    T = cfg["T"]
    rows = []
    identity_ok = True
    for s in cfg["s_exponents"]:
        closed = ball_overlap_closed(params, s)
        truncated = ball_overlap_truncated(params, s, T)
        err = abs(closed - truncated)
        if params.mode == EXACT:
            if truncated + ball_overlap_tail(params, s, T) != closed:
                identity_ok = False
        rows.append([s, _fmt(closed), _fmt(truncated), _fmt(err)])
    outputs = {"T": T, "tail_identity_exact": identity_ok,
               "rows": len(rows)}
    return outputs, {"lemma1": rows}, identity_ok


def _cmd_energy(cfg: dict):
    params = _params_from_config(cfg)
    mu = _measure_from_config(cfg["measure"], params)
    V = _potential_from_config(cfg, params)
    nu = (_measure_from_config(cfg["nu"], params) if cfg.get("nu") else None)
    outputs = {
        "self_energy": mutual_energy(mu, mu, params).to_json(),
        "mean_field": mean_field_energy(mu, V, params).to_json(),
        "mass": mu.mass().to_json(),
    }
    if nu is not None:
        outputs["mutual_energy"] = mutual_energy(mu, nu, params).to_json()
    return outputs, {}, True


def _cmd_frostman(cfg: dict):
    params = _params_from_config(cfg)
    mu = _measure_from_config(cfg["measure"], params)
    V = _potential_from_config(cfg, params)
    depth = cfg.get("sample_depth") or mu.l
    if depth < mu.l:
        raise ParameterError("sample_depth must be >= the measure depth")
    sample_L = max(mu.L, cfg.get("sample_L", mu.L + 1))
    cells = enumerate_cells(params.p, params.d, sample_L, depth)
    tol = cfg.get("tolerance")
    tol_s = None if tol is None else _scalar_from_config(tol, params.mode)
    report = frostman_check(mu, V, params, cells, tol=tol_s)
    return {"report": report.to_json()}, {}, report.passed


def _cmd_spinglass(cfg: dict):
    params = _params_from_config(cfg)
    rho = _measure_from_config(cfg.get("rho", cfg["measure"]), params)
    v0_spec = cfg.get("v0_table")
    if v0_spec:
        v0 = _measure_from_config(v0_spec, params)
    else:
        one = Scalar.one(params.mode)
        v0 = CellDensity(rho.p, rho.d, rho.L, rho.l,
                         (one,) * cell_count(rho.p, rho.d, rho.L, rho.l))
    rows_raw = continuum_limit_study(rho, v0, params, cfg["l_range"])
    zero = Scalar.zero(params.mode)
    rows = [[r.l, _fmt(r.energy), _fmt(r.gap)] for r in rows_raw]
    outputs = {"rows": len(rows),
               "final_gap_zero": rows_raw[-1].gap == zero if rows_raw else True}
    return outputs, {"spinglass": rows}, True


def _cmd_place(cfg: dict):
    params = _params_from_config(cfg)
    M, K, L = cfg["M"], cfg["K"], cfg["L"]
    rng = SeededRng(cfg["seed"], 1)
    plans = []
    gap_rows = []
    passed = True
    for trial in range(cfg["count"]):
        mu = _random_admissible_density(params, L, M, K, rng)
        plan, points = recovery_place(mu, K)
        emp = DiscreteMeasure.empirical(points, params.mode)
        for _ in range(cfg["phi_trials"]):
            phi = _random_test_function(params, L, M, rng)
            gap, bound = weak_gap(emp, mu, phi)
            gap_rows.append([trial, _fmt(gap), _fmt(bound)])
        plans.append(plan.to_json())
    outputs = {"plans": plans, "total_points": sum(plans[0]["counts"])}
    tables = {"place": [[i, f, e, f + e] for p_ in plans
                        for i, (f, e) in enumerate(zip(p_["floors"], p_["eps"]))],
              "weak_gap": gap_rows}
    return outputs, tables, passed


def _random_admissible_density(params: KernelParams, L: int, M: int, K: int,
                               rng: SeededRng) -> CellDensity:
    """Random probability density at depth M with values in (0, p^(Kd)-1]."""
    n = cell_count(params.p, params.d, L, M)
    hi = params.p ** (K * params.d) - 2
    weights = [int(w) for w in rng.integers(1, max(hi, 2), size=n)]
    total = sum(weights)
    values = []
    for w in weights:
        frac = Fraction(w, total) * params.p ** (M * params.d)  # density = mass/vol
        values.append(Scalar.exact(frac) if params.mode == EXACT
                      else Scalar.approx(float(frac)))
    return CellDensity(params.p, params.d, L, M, tuple(values))


def _random_test_function(params: KernelParams, L: int, M: int,
                          rng: SeededRng) -> CellDensity:
    depth = int(rng.integers(0, M + 1))
    n = cell_count(params.p, params.d, L, depth)
    vals = [int(v) for v in rng.integers(-5, 6, size=n)]
    values = tuple(Scalar.of(v, params.mode) for v in vals)
    return CellDensity(params.p, params.d, L, depth, values)


def _cmd_minimize(cfg: dict):
    params = _params_from_config(cfg)
    V = _potential_from_config(cfg, params)
    schedule = _schedule_from_config(cfg)
    result = anneal_minimize(cfg["n"], V, params, cfg["L"], cfg["l"],
                             schedule=schedule)
    rows = [[s, t, h, b] for s, t, h, b in result.trace]
    histogram = sphere_support_histogram(result.points, params)
    outputs = {
        "energy": result.energy.to_json(),
        "normalized_energy": (result.energy / (cfg["n"] ** 2)).to_json(),
        "points": [x.to_json() for x in result.points],
        "accepted": result.accepted,
        "proposals": result.proposals,
        "sphere_histogram": {str(k): v for k, v in sorted(
            histogram.items(), key=lambda kv: (kv[0] is None, kv[0]))},
    }
    return outputs, {"minimize": rows}, True


def _cmd_gamma(cfg: dict):
    params = _params_from_config(cfg)
    V = _potential_from_config(cfg, params)
    schedule = _schedule_from_config(cfg)
    if cfg.get("reference") is not None:
        reference = _scalar_from_config(cfg["reference"], params.mode)
    else:
        v0 = V.uniform_inside_value()
        if v0 is None:
            raise ParameterError("gamma needs an explicit reference for this V")
        # equilibrium value for the flat confined gas: E(u_L, u_L) + v0
        reference = shell_integral(params, cfg["L"]) / ball_volume(params, cfg["L"]) + v0
    rows_raw = gamma_experiment(V, params, cfg["n_sequence"], schedule,
                                reference, L=cfg["L"])
    rows = [[r.n, r.lattice_depth, _fmt(r.achieved), _fmt(r.reference),
             _fmt(r.gap), r.certified] for r in rows_raw]
    outputs = {"rows": [r.to_json() for r in rows_raw]}
    passed = all(r.certified for r in rows_raw)
    return outputs, {"gamma": rows}, passed


def _cmd_suite(cfg: dict):
    params = _params_from_config(cfg)
    if params.mode != EXACT:
        raise ParameterError("the suite runs in exact mode")
    rng = SeededRng(cfg["seed"], 7)
    report = positivity_suite(params, cfg["depth"], cfg["trials"], rng,
                              L=cfg["L"])
    checks = {"positivity": report.to_json()}
    battery_ok = _invariant_battery(params, cfg, rng, checks)
    passed = report.passed and battery_ok
    return {"checks": checks}, {}, passed


def _invariant_battery(params: KernelParams, cfg: dict, rng: SeededRng,
                       checks: dict) -> bool:
    """Spot-checks: exact ultrametric inequality on random sampled triples,
    the consistency web of the radial closed forms, and cell counting."""
    ok = True
    p, d = params.p, params.d
    cells = enumerate_cells(p, d, 0, 1)
    for _ in range(50):
        pts = [sample_uniform(cells[int(rng.integers(0, len(cells)))], 8, rng)
               for _ in range(3)]
        x, y, z = pts
        exy = (x - y).norm_exponent()
        exz = (x - z).norm_exponent()
        ezy = (z - y).norm_exponent()
        if exy is not None and exz is not None and ezy is not None:
            if exy > max(exz, ezy):
                ok = False
    web = True
    one = Scalar.one(params.mode)
    for r in (-1, 0, 1):
        # capacity == 1 / (uniform-ball self energy) == vol(B_r)/shell_integral(r)
        lhs = capacity_ball(params, r)
        rhs = one / (shell_integral(params, r) / ball_volume(params, r))
        if params.mode == EXACT and lhs != rhs:
            web = False
    counts_ok = all(
        len(enumerate_cells(p, d, 0, l)) == cell_count(p, d, 0, l)
        for l in (0, 1, 2))
    checks["ultrametric_triples"] = ok
    checks["consistency_web"] = web
    checks["cell_counts"] = counts_ok
    return ok and web and counts_ok


COMMANDS = {
    "constants": _cmd_constants,
    "lemma1": _cmd_lemma1,
    "energy": _cmd_energy,
    "frostman": _cmd_frostman,
    "spinglass": _cmd_spinglass,
    "place": _cmd_place,
    "minimize": _cmd_minimize,
    "gamma": _cmd_gamma,
    "suite": _cmd_suite,
}


def _fmt(s: Scalar) -> str:
    obj = s.to_json()
    return str(obj["value"])


def _write_outputs(out_dir: Path, command: str, record: dict,
                   tables: Dict[str, List[list]]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{command}_result.json"
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    for name, rows in tables.items():
        columns = COLUMN_CONTRACTS.get(name)
        csv_path = out_dir / f"{command}_{name}.csv"
        with csv_path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            if columns and len(columns) == len(rows[0] if rows else columns):
                writer.writerow(columns)
            elif rows:
                writer.writerow([f"c{i}" for i in range(len(rows[0]))])
            writer.writerows(rows)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="padicgas",
        description="Ultrametric Coulomb gas batch runner")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON config document")
    parser.add_argument("--mode", choices=[EXACT, FLOAT], default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None,
                        help="worker cap; results are identical for any value")
    parser.add_argument("--out", type=Path, default=None)
    parser.add_argument("--stable", action="store_true",
                        help="omit timings for byte-identical reruns")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = dict(DEFAULT_CONFIG)
    try:
        if args.config is not None:
            cfg.update(json.loads(args.config.read_text()))
        if args.mode is not None:
            cfg["mode"] = args.mode
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.threads is not None:
            cfg["threads"] = max(1, args.threads)
        if args.out is not None:
            cfg["out"] = str(args.out)

        t0 = time.perf_counter()
        outputs, tables, passed = COMMANDS[args.command](cfg)
        elapsed = time.perf_counter() - t0
        record = {
            "schema_version": SCHEMA_VERSION,
            "tool_version": __version__,
            "command": args.command,
            "config": cfg,
            "columns": {k: COLUMN_CONTRACTS.get(k) for k in tables},
            "outputs": outputs,
            "pass": passed,
        }
        if not args.stable:
            record["timings"] = {"seconds": elapsed}
        _write_outputs(Path(cfg["out"]), args.command, record, tables)
        if not passed:
            print(f"{args.command}: FAILED checks", file=sys.stderr)
            return 2
        print(f"{args.command}: ok ({len(tables)} tables)")
        return 0
    except CapacityError as exc:
        print(f"resource cap exceeded: {exc}", file=sys.stderr)
        return 3
    except CheckError as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 2
    except (ParameterError, DomainError, PrecisionError, ScalarModeError,
            KeyError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"invalid request: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
