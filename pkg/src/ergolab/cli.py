"""Config-driven experiment runner.

    ergolab <experiment> --config FILE [--out DIR] [--seeds 1,2,3] [--horizon N]
    ergolab bundle --config FILE [--out DIR]

Exit codes: 0 all verdicts pass, 1 some verdict fails, 2 config error,
3 numerical failure, 4 missing run outputs (bundle).
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    EXPERIMENTS,
    SCHEMA_VERSION,
    ConfigError,
    ExperimentConfig,
    build_cocycle,
    build_delta,
    build_driver,
    build_matrices,
    build_system,
    load_config,
)
from .driver import OmegaPath
from .errors import DomainError, NoGoodTimes, NumericalError, SpecError
from .io import write_csv, write_json
from .meten import (
    banach_direction,
    extract_functional,
    mean_ergodic_run,
    verify_met,
    wolff_denjoy_limit,
)
from .oseledets import checkpoint_rows, lyapunov_qr, operator_run, verify_operator_met
from .spaces.functionals import lipschitz_excess
from .spaces.maps import orbit
from .subadd import (
    OrbitCocycle,
    bad_map,
    decomposition_bound,
    detect_good_times,
    estimate_drift,
    greedy_decompose,
    recheck_good_times,
    reverse,
    scan_good_times,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC, EXIT_MISSING = 0, 1, 2, 3, 4


class RunResult:
    """Summary, CSV tables and plot manifest entries produced by one experiment."""

    def __init__(self, experiment: str):
        self.experiment = experiment
        self.summary: dict = {}
        self.tables: dict = {}  # file name -> (header, rows)
        self.plots: list = []  # {"file", "x", "y", "reference"}
        self.verdicts: dict = {}

    def table(self, name, header, rows, x=None, y=None, reference=None):
        self.tables[name] = (list(header), [list(r) for r in rows])
        if x is not None:
            self.plots.append({"file": name, "x": x, "y": y, "reference": reference})

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())


def _estimate_A(cfg: ExperimentConfig, cocycle, spec) -> float:
    if cfg.A is not None:
        return float(cfg.A)
    seeds = cfg.training_seeds or cfg.seeds
    return estimate_drift(cocycle, spec, seeds, cfg.calibration_horizon or cfg.horizon).A_hat_as


def run_drift(cfg, res):
    spec = build_driver(cfg.driver)
    c = build_cocycle(cfg, spec)
    est = estimate_drift(c, spec, cfg.seeds, cfg.horizon)
    res.summary["drift"] = est.summary()
    target = cfg.expect.get("A")
    res.table("drift.csv", ["n", "mean_ratio"], zip(est.curve_ns, est.curve), "n", "mean_ratio",
              target if target is not None else est.A_hat_as)
    res.verdicts["inf_below_limit"] = est.A_hat_inf <= est.A_hat_as + 2 * est.stderr + 1e-12
    if target is not None:
        res.verdicts["drift"] = abs(est.A_hat_as - float(target)) <= cfg.tol("drift", 0.02)


def run_goodtimes(cfg, res):
    spec = build_driver(cfg.driver)
    c = build_cocycle(cfg, spec)
    A = _estimate_A(cfg, c, spec)
    deltas = build_delta(cfg, c, spec, A_hat=A)
    calibrated = cfg.delta.get("kind") == "calibrate"
    min_density = cfg.tol("min_density", 1 - float(cfg.delta["rho"]) if calibrated else 0.9)
    per_seed = []
    for s in cfg.seeds:
        path = OmegaPath(spec, s)
        rep = detect_good_times(c, path, cfg.horizon, deltas, A, cfg.mode)
        bad = recheck_good_times(c, path, rep)
        res.table(f"goodtimes_seed{s}.csv", rep.csv_header(), rep.csv_rows(), "n", "density", min_density)
        per_seed.append({"seed": s, **rep.summary(), "recheck_violations": len(bad)})
    dens = np.array([p["density"] for p in per_seed])
    frac = float(np.mean(dens > min_density))
    res.summary.update({"A": A, "deltas_head": deltas.to_list(min(10, cfg.horizon)), "seeds": per_seed,
                        "fraction_dense": frac, "min_density": min_density})
    res.verdicts["sound"] = all(p["recheck_violations"] == 0 for p in per_seed)
    res.verdicts["density"] = frac >= cfg.tol("min_fraction", 0.9)


def _functional_common(cfg, res, kind):
    spec = build_driver(cfg.driver)
    system = build_system(cfg)
    c = OrbitCocycle(system)
    orbits = {s: orbit(system, OmegaPath(spec, s), cfg.horizon, "forward") for s in cfg.seeds}
    if cfg.A is not None:
        A = float(cfg.A)
    else:
        A = float(np.mean([o.distances()[-1] / cfg.horizon for o in orbits.values()]))
    deltas = build_delta(cfg, c, spec, A_hat=A)
    tol = cfg.tol("met", 0.02)
    per_seed = []
    for s, orb in orbits.items():
        entry = {"seed": s}
        rep = scan_good_times(c, orb.path, cfg.horizon, deltas, A, cfg.mode, count=3,
                              max_scan=int(cfg.options.get("max_scan", 2000)))
        entry["good_times"] = rep.good_times.tolist()
        try:
            if kind == "functional":
                est = extract_functional(orb, rep)
                conv = verify_met(orb, est.functional, A, cfg.horizon, tol)
                rng = np.random.default_rng(s)
                y = system.space.random_points(rng, 1000, 2.0)
                z = system.space.random_points(rng, 1000, 2.0)
                lip = lipschitz_excess(est.functional, system.space, y, z)
                base = float(abs(est.functional(system.basepoint)))
                entry.update({"good_time": est.good_time, "chain_margin": est.chain_margin,
                              "lipschitz_excess": lip, "value_at_basepoint": base, **conv.summary()})
                ok = conv.verdict and est.chain_holds and lip <= 1e-9 and base <= 1e-9
            else:
                bd = banach_direction(orb, rep, tol)
                conv = bd.report
                entry.update({"functional": bd.functional.vector, "dual_norm": bd.functional.dual_norm,
                              "trivial": bd.trivial, "averaged": bd.averaged, "chain_margin": bd.chain_margin,
                              **conv.summary()})
                ok = conv.verdict and (bd.trivial or (bd.chain_holds and abs(bd.functional.dual_norm - 1) <= 1e-9))
        except NoGoodTimes as exc:
            entry["error"] = str(exc)
            ok = False
            conv = None
        entry["verdict"] = bool(ok)
        per_seed.append(entry)
        if conv is not None:
            res.table(f"{kind}_seed{s}.csv", conv.csv_header(), conv.csv_rows(), "n", "estimate", A)
    res.summary.update({"A": A, "seeds": per_seed})
    res.verdicts[kind] = all(p["verdict"] for p in per_seed)


def run_functional(cfg, res):
    _functional_common(cfg, res, "functional")


def run_banach(cfg, res):
    _functional_common(cfg, res, "banach")


def run_meanergodic(cfg, res):
    spec = build_driver(cfg.driver)
    U = build_matrices(cfg)
    norm = (cfg.space or {}).get("norm", "l2")
    target = float(cfg.expect.get("limit", 0.0))
    tol = cfg.tol("limit", 0.02)
    per_seed = []
    for s in cfg.seeds:
        out = mean_ergodic_run(U, OmegaPath(spec, s), cfg.vector, cfg.horizon, norm, target, tol)
        res.table(f"meanergodic_seed{s}.csv", out.report.csv_header(), out.report.csv_rows(), "n", "estimate",
                  target)
        ok = out.report.verdict and out.consistency <= 1e-12
        per_seed.append({"seed": s, "limit": out.limit, "functional": out.functional.vector,
                         "trivial": out.trivial, "consistency": out.consistency, "max_norm": out.max_norm,
                         "verdict": bool(ok)})
    res.summary.update({"target": target, "seeds": per_seed})
    res.verdicts["meanergodic"] = all(p["verdict"] for p in per_seed)


def run_wolffdenjoy(cfg, res):
    spec = build_driver(cfg.driver)
    system = build_system(cfg)
    expect_xi = cfg.expect.get("xi")
    expect_status = cfg.expect.get("status")
    per_seed = []
    for s in cfg.seeds:
        orb = orbit(system, OmegaPath(spec, s), cfg.horizon, "forward")
        A_hat = float(orb.distances()[-1] / cfg.horizon)
        wd = wolff_denjoy_limit(orb, A_hat, drift_threshold=cfg.tol("drift_threshold", 0.01))
        res.table(f"orbit_seed{s}.csv", orb.header(), orb.rows(), "step", "distance", None)
        if expect_xi is not None:
            xi = complex(*expect_xi) if isinstance(expect_xi, list) else complex(expect_xi)
            ok = wd.status == "converged" and abs(wd.xi - xi) < cfg.tol("xi", 1e-3) and wd.start_independent
        elif expect_status is not None:
            ok = wd.status == expect_status
        else:
            ok = wd.status != "inconclusive"
        per_seed.append({"seed": s, "status": wd.status, "xi": wd.xi, "xi_second": wd.xi_second,
                         "diagnostics": wd.diagnostics, "verdict": bool(ok)})
    res.summary["seeds"] = per_seed
    res.verdicts["wolffdenjoy"] = all(p["verdict"] for p in per_seed)


def run_oseledets(cfg, res):
    spec = build_driver(cfg.driver)
    mats = build_matrices(cfg)
    per_seed = []
    for s in cfg.seeds:
        path = OmegaPath(spec, s)
        run = operator_run(mats, path, cfg.horizon)
        sp = lyapunov_qr(mats, path, cfg.horizon, checkpoints=run.ns)
        rep = verify_operator_met(run, sp, cfg.tol("norm", 0.03), cfg.tol("eigenvalues", 0.05),
                                  cfg.tol("functional", 0.03))
        header, rows = checkpoint_rows(run, sp)
        res.table(f"oseledets_seed{s}.csv", header, rows, "n", "a_rate", rep.norm_of_limit)
        per_seed.append({"seed": s, **rep.summary()})
    res.summary["seeds"] = per_seed
    res.verdicts["oseledets"] = all(p["verdict"] for p in per_seed)


def run_decompose(cfg, res):
    spec = build_driver(cfg.driver)
    c = build_cocycle(cfg, spec)
    b = reverse(c)
    A = _estimate_A(cfg, c, spec)
    gap = float(cfg.options.get("c", 1.0))
    per_seed = []
    for s in cfg.seeds:
        path = OmegaPath(spec, s)
        rec = greedy_decompose(bad_map(b, path, cfg.horizon, A, gap), cfg.horizon)
        bound = decomposition_bound(b, path, rec)
        rows = [[lo, hi, kind, ell] for (lo, hi), (kind, ell) in zip(rec.intervals, rec.tags)]
        res.table(f"decompose_seed{s}.csv", ["lo", "hi", "kind", "ell"], rows, "lo", "hi", None)
        ok = rec.covers(cfg.horizon) and bound.holds
        per_seed.append({"seed": s, "intervals": len(rec.intervals),
                         "bad_jumps": sum(1 for t in rec.tags if t[0] == "bad_jump"),
                         "b_N": bound.value, "bound": bound.bound, "verdict": bool(ok)})
    res.summary.update({"A": A, "c": gap, "seeds": per_seed})
    res.verdicts["decompose"] = all(p["verdict"] for p in per_seed)


RUNNERS = {
    "drift": run_drift,
    "goodtimes": run_goodtimes,
    "functional": run_functional,
    "banach": run_banach,
    "meanergodic": run_meanergodic,
    "wolffdenjoy": run_wolffdenjoy,
    "oseledets": run_oseledets,
    "decompose": run_decompose,
}


def run(cfg: ExperimentConfig, out: Path) -> RunResult:
    res = RunResult(cfg.experiment)
    RUNNERS[cfg.experiment](cfg, res)
    out.mkdir(parents=True, exist_ok=True)
    for name, (header, rows) in sorted(res.tables.items()):
        write_csv(out / name, header, rows)
    write_json(out / "config.json", cfg.to_dict())
    write_json(out / "summary.json", {"schema_version": SCHEMA_VERSION, "ergolab_version": __version__,
                                      "experiment": cfg.experiment, "horizon": cfg.horizon, "seeds": cfg.seeds,
                                      "verdicts": res.verdicts, "passed": res.passed, "plots": res.plots,
                                      "results": res.summary})
    return res


def emit_bundle(out: Path, bundle: Path | None = None) -> Path:
    """Copy a completed run into a self-describing bundle with a plot manifest."""
    summary_path = out / "summary.json"
    if not summary_path.is_file() or not (out / "config.json").is_file():
        raise FileNotFoundError(f"no completed run in {out}")
    summary = json.loads(summary_path.read_text())
    files = [p["file"] for p in summary.get("plots", [])]
    missing = [f for f in files if not (out / f).is_file()]
    if missing:
        raise FileNotFoundError(f"run output {missing[0]} is missing from {out}")
    bundle = bundle or out / "bundle"
    bundle.mkdir(parents=True, exist_ok=True)
    for f in sorted(set(files)) + ["config.json", "summary.json"]:
        shutil.copyfile(out / f, bundle / f)
    write_json(bundle / "manifest.json", {"schema_version": SCHEMA_VERSION, "experiment": summary["experiment"],
                                          "entries": summary.get("plots", [])})
    return bundle


def _parse_seeds(text: str):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("seeds must be comma-separated integers") from None


def _failing_module(exc: BaseException) -> str:
    tb = traceback.extract_tb(exc.__traceback__)
    for frame in reversed(tb):
        parts = Path(frame.filename).parts
        if "ergolab" in parts:
            return ".".join(parts[parts.index("ergolab"):]).removesuffix(".py")
    return "ergolab"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ergolab", description="Run cocycle experiments from a JSON config.")
    p.add_argument("experiment", choices=EXPERIMENTS + ("bundle",))
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", type=Path, default=None, help="output directory (overrides the config)")
    p.add_argument("--seeds", type=_parse_seeds, default=None, help="comma-separated seeds")
    p.add_argument("--horizon", type=int, default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.experiment == "bundle":
            raw = json.loads(args.config.read_text())
            out = args.out or Path(raw.get("output", "out"))
        else:
            cfg = load_config(args.config, args.experiment, {"seeds": args.seeds, "horizon": args.horizon})
            out = args.out or Path(cfg.output)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.experiment == "bundle":
        try:
            path = emit_bundle(out)
        except FileNotFoundError as exc:
            print(f"bundle error: {exc}", file=sys.stderr)
            return EXIT_MISSING
        print(f"bundle written to {path}")
        return EXIT_OK
    try:
        res = run(cfg, out)
    except (NumericalError, DomainError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure in {_failing_module(exc)}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SpecError as exc:
        print(f"config error: {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for name, ok in res.verdicts.items():
        print(f"{'PASS' if ok else 'FAIL'} {cfg.experiment}.{name}")
    return EXIT_OK if res.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
