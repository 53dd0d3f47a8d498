"""Command-line drivers: ``build``, ``validate``, ``inverse-design``, ``uq``
and ``report``.

Exit codes: 0 success, 2 validation thresholds missed, 1 any error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import kernels
from .apps import GaSettings, ReportError, inverse_design, uq_study, validate, write_report
from .config import ConfigError, case_from_config, config_digest, load_config, validate_config, with_seed
from .cst import perturb_family, write_family_csv
from .kriging import fit_surrogate, load_surrogate, save_surrogate
from .pipeline import BuildError, build_database, rom_evaluate
from .rom import SolveOptions
from .romdb import load_db, save_db

log = logging.getLogger("liftrom")

EXIT_OK, EXIT_ERROR, EXIT_THRESHOLD = 0, 1, 2
DB_NAME, GP_NAME = "db.bin", "gp.bin"


class Manifest:
    """Single writer for ``manifest.json`` in the output directory."""

    def __init__(self, out: Path):
        self.path = out / "manifest.json"
        self.entries = json.loads(self.path.read_text(encoding="utf-8")) if self.path.is_file() else []

    def add(self, **entry):
        entry.setdefault("time", time.strftime("%Y-%m-%dT%H:%M:%S"))
        self.entries.append(entry)
        self.path.write_text(json.dumps(self.entries, indent=1), encoding="utf-8")


def _solve_opts(cfg) -> SolveOptions:
    r = cfg["rom"]
    return SolveOptions(obj_tol=r["obj_tol"], con_tol=r["con_tol"], max_evals=r["max_evals"], form=r["form"],
                        starts=r["starts"])


def _load(out: Path, db_path=None):
    path = Path(db_path) if db_path else out / DB_NAME
    if not path.is_file():
        raise FileNotFoundError(f"database not found: {path} (run 'liftrom build' first)")
    db = load_db(path)
    gp = path.parent / GP_NAME
    sur = load_surrogate(gp, db.basis) if gp.is_file() else None
    return db, sur


def cmd_build(cfg, args, out: Path, manifest: Manifest) -> int:
    case = case_from_config(cfg)
    b = cfg["build"]
    t0 = time.perf_counter()
    thetas = perturb_family(case.base, case.fraction, b["samples"], case.active, b["seed"])
    write_family_csv(out / "family.csv", thetas, case.active)
    db = build_database(case, thetas, b["energy_target"], b["solver"], args.jobs, weighting=b["weighting"])
    save_db(db, out / DB_NAME)
    files = [DB_NAME, DB_NAME + ".json", "family.csv"]
    if db.M >= 3:
        save_surrogate(fit_surrogate(db.thetas, db.coords, db.basis), out / GP_NAME)
        files.append(GP_NAME)
    manifest.add(command="build", config=config_digest(cfg), seed=b["seed"], M=db.M, k=db.k, ks=db.basis.ks,
                 failed=db.meta["failed"], timings={**db.meta["timings"], "total": time.perf_counter() - t0},
                 backend=kernels.BACKEND, outputs=files)
    print(f"built database: M={db.M} k={db.k} ks={db.basis.ks} -> {out / DB_NAME}")
    return EXIT_OK


def _read_thetas(path, d):
    """Parameter rows from a CSV; a non-numeric first row is a header."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        [float(v) for v in rows[0]]
    except ValueError:
        rows = rows[1:]
    except IndexError:
        raise ValueError(f"{path}: no parameter rows") from None
    try:
        vals = np.array([[float(v) for v in r] for r in rows])
    except ValueError:
        raise ValueError(f"{path}: parameter rows must be numeric") from None
    if vals.ndim != 2 or vals.shape[1] != d:
        raise ValueError(f"{path}: expected {d} columns per row")
    return vals


def cmd_validate(cfg, args, out: Path, manifest: Manifest) -> int:
    db, sur = _load(out, args.db)
    v = cfg["validate"]
    if args.holdout:
        hold = _read_thetas(args.holdout, db.d)
    else:
        lo, hi = db.case.bounds()
        hold = lo + np.random.default_rng(v["seed"]).random((v["holdout"], db.d)) * (hi - lo)
    rep = validate(db, hold, sur, _solve_opts(cfg), cfg["build"]["solver"])
    summ = rep.summary()
    th = v["thresholds"]
    errs = [c["errors"]["rom"] for c in rep.cases]
    n_cl = sum(e["cl"] <= th["cl"] for e in errs)
    checks = {
        "cp_max": summ["rom"]["cp_max"] <= th["cp_max"],
        "cp_mean": summ["rom"]["cp_mean"] <= th["cp_mean"],
        "cl": n_cl >= min(th.get("cl_min_pass", len(errs)), len(errs)),
    }
    vdir = out / "validate"
    vdir.mkdir(parents=True, exist_ok=True)
    report = {"cases": rep.cases, "summary": summ, "timings": rep.timings, "thresholds": th, "checks": checks}
    (vdir / "report.json").write_text(json.dumps(report, indent=1), encoding="utf-8")
    manifest.add(command="validate", config=config_digest(cfg), seed=v["seed"], holdout=hold.tolist(),
                 summary=summ, checks=checks, timings=rep.timings, outputs=["validate/report.json"])
    for c in rep.cases:
        e = c["errors"]["rom"]
        print(f"case {c['index']}: cp {e['cp']:.3f}%  cl {e['cl']:.3f}%  cd {e['cd']:.3f}%")
    ok = all(checks.values())
    print("thresholds " + ("met" if ok else "MISSED: " + ", ".join(k for k, p in checks.items() if not p)))
    return EXIT_OK if ok else EXIT_THRESHOLD


def _read_target(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "cp" not in rows[0]:
        raise ValueError(f"{path}: target file needs a 'cp' column (optionally 'x' and 'y')")
    cp = np.array([float(r["cp"]) for r in rows])
    xy = np.array([[float(r["x"]), float(r["y"])] for r in rows]) if {"x", "y"} <= set(rows[0]) else None
    return cp, xy


def cmd_inverse(cfg, args, out: Path, manifest: Manifest) -> int:
    db, _ = _load(out, args.db)
    g = cfg["ga"]
    opts = SolveOptions(con_tol=g["con_tol"], obj_tol=g["obj_tol"], max_evals=cfg["rom"]["max_evals"], form=cfg["rom"]["form"],
                        starts=cfg["rom"]["starts"])
    theta_star = None
    if args.theta_star:
        theta_star = np.array([float(t) for t in args.theta_star.split(",")])
        cp, xy = rom_evaluate(db, theta_star, _solve_opts(cfg))["cp"], None
    elif args.target:
        cp, xy = _read_target(args.target)
    else:
        raise ValueError("inverse-design needs --target <csv> or --theta-star <a,b,...>")
    settings = GaSettings(**{k: g[k] for k in ("population", "generations", "tournament", "blend_alpha", "mutation_rate", "mutation_sigma", "elitism")})
    t0 = time.perf_counter()
    res = inverse_design(db, cp, settings, g["seed"], opts, xy)
    lo, hi = db.case.bounds()
    result = {
        "best_theta": res.best.tolist(),
        "best_fitness": res.best_fitness,
        "evaluations": res.evaluations,
        "failures": res.failures,
        "history": res.history,
        "bounds": [lo.tolist(), hi.tolist()],
        "seconds": time.perf_counter() - t0,
    }
    if theta_star is not None:
        result["theta_star"] = theta_star.tolist()
        result["relative_error"] = (np.abs(res.best - theta_star) / (hi - lo)).tolist()
    idir = out / "inverse"
    idir.mkdir(parents=True, exist_ok=True)
    (idir / "inverse.json").write_text(json.dumps(result, indent=1), encoding="utf-8")
    manifest.add(command="inverse-design", config=config_digest(cfg), seed=g["seed"], evaluations=res.evaluations,
                 best_theta=result["best_theta"], outputs=["inverse/inverse.json"])
    print(f"best theta {np.array2string(res.best, precision=6)}  fitness {res.best_fitness:.3e}  evaluations {res.evaluations}")
    return EXIT_OK


def cmd_uq(cfg, args, out: Path, manifest: Manifest) -> int:
    db, sur = _load(out, args.db)
    u = cfg["uq"]
    n = args.samples or u["samples"]
    t0 = time.perf_counter()
    res = uq_study(db, sur, n, u["seed"], u["fom_control"], (u["bandwidth_cl"], u["bandwidth_cd"]), u["kde_points"],
                   _solve_opts(cfg), cfg["build"]["solver"])
    udir = out / "uq"
    udir.mkdir(parents=True, exist_ok=True)
    doc = {
        "samples": n,
        "seed": u["seed"],
        "stats": res["stats"],
        "kurtosis_convention": "non-excess (normal = 3)",
        "failed": {k: len(v) for k, v in res["failed"].items()},
        "failures": res["failed"],
        "kde": {q: {k: np.asarray(v).tolist() for k, v in c.items()} for q, c in res["kde"].items()},
        "bandwidths": {"cl": u["bandwidth_cl"], "cd": u["bandwidth_cd"]},
        "seconds": time.perf_counter() - t0,
    }
    (udir / "uq.json").write_text(json.dumps(doc, indent=1), encoding="utf-8")
    cols = [("rom", "cl"), ("rom", "cd"), ("krig", "cl"), ("krig", "cd")]
    cols = [c for c in cols if c[0] in res]
    with open(udir / "samples.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"theta{i}" for i in range(db.d)] + [f"{q}_{m}" for m, q in cols])
        for i, th in enumerate(res["theta"]):
            w.writerow(list(th) + [res[m][q][i] for m, q in cols])
    manifest.add(command="uq", config=config_digest(cfg), seed=u["seed"], samples=n, stats=res["stats"],
                 failed=doc["failed"], outputs=["uq/uq.json", "uq/samples.csv"])
    for m, s in res["stats"].items():
        print(m, " ".join(f"{q}: mean {v['mean']:.5f} std {v['std']:.5f}" for q, v in s.items()))
    return EXIT_OK


def cmd_report(cfg, args, out: Path, manifest: Manifest) -> int:
    summ = write_report(out)
    manifest.add(command="report", outputs=["report/summary.json"] + summ["files"])
    print(f"wrote {len(summ['files'])} files under {out / 'report'}")
    return EXIT_OK


COMMANDS = {
    "build": cmd_build,
    "validate": cmd_validate,
    "inverse-design": cmd_inverse,
    "uq": cmd_uq,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="liftrom", description="Lifted projection ROMs for steady airfoil flows.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="YAML run configuration (defaults: packaged NACA0012 study)")
        s.add_argument("--seed", type=int, help="override all stage seeds")
        s.add_argument("--jobs", type=int, default=1, help="worker processes for FOM solves")
        s.add_argument("--out", default="run", help="run directory")
        if name != "build" and name != "report":
            s.add_argument("--db", help="database file (default: <out>/db.bin)")
            s.add_argument("--starts", type=int, help="override rom.starts (reduced solves from the nearest training points)")
        if name == "validate":
            s.add_argument("--holdout", help="CSV of hold-out parameter rows")
        if name == "inverse-design":
            s.add_argument("--target", help="CSV with a 'cp' column (and optional x, y for resampling)")
            s.add_argument("--theta-star", help="self-target: comma-separated parameters")
        if name == "uq":
            s.add_argument("--samples", type=int, help="override uq.samples")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg = with_seed(load_config(args.config), args.seed)
        if getattr(args, "starts", None) is not None:
            cfg["rom"]["starts"] = args.starts
            validate_config(cfg)
        out = Path(args.out)
        if args.command == "report" and not out.is_dir():
            raise ReportError(f"run directory {out} does not exist")
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args, out, Manifest(out))
    except (ConfigError, BuildError, ReportError, FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"liftrom {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
