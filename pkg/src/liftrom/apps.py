"""Validation, inverse design, uncertainty quantification and report
emission on top of a built database."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .kriging import PodKrigSurrogate, pod_krig_predict
from .pipeline import error_metrics, rom_evaluate, run_fom
from .rom import RomSolveError, SolveOptions
from .romdb import RomDatabase

__all__ = [
    "GaSettings",
    "GaResult",
    "ErrorReport",
    "validate",
    "genetic_minimize",
    "inverse_design",
    "resample_cp",
    "arc_fraction",
    "wall_order",
    "gaussian_kde",
    "kde_grid",
    "output_statistics",
    "uq_study",
    "write_report",
    "ReportError",
]

log = logging.getLogger(__name__)


# -- validation ------------------------------------------------------------------------

@dataclass
class ErrorReport:
    cases: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {}
        for method in ("rom", "krig"):
            rows = [c["errors"][method] for c in self.cases if method in c["errors"]]
            if not rows:
                continue
            out[method] = {
                f"{m}_{agg}": float(fn([r[m] for r in rows]))
                for m in ("cp", "cl", "cd")
                for agg, fn in (("max", np.max), ("mean", np.mean))
            }
        return out


def validate(db: RomDatabase, holdout, surrogate: PodKrigSurrogate | None = None, opts=None, solver=None) -> ErrorReport:
    """Fresh FOM solves at ``holdout`` compared with POD-Proj (and POD-Krig)."""
    rep = ErrorReport()
    t_fom = t_rom = t_krig = 0.0
    for i, theta in enumerate(np.atleast_2d(holdout)):
        t0 = time.perf_counter()
        fom = run_fom(db.case, theta, solver, keep=True)
        t1 = time.perf_counter()
        rom = rom_evaluate(db, theta, opts, mesh=fom.mesh)
        t2 = time.perf_counter()
        case = {
            "index": i,
            "theta": np.asarray(theta).tolist(),
            "x": rom["x"].tolist(),
            "cp_fom": fom.cp.tolist(),
            "cp_rom": rom["cp"].tolist(),
            "cl": {"fom": fom.cl, "rom": rom["cl"]},
            "cd": {"fom": fom.cd, "rom": rom["cd"]},
            "errors": {"rom": error_metrics(rom["cp"], fom.cp, rom["cl"], fom.cl, rom["cd"], fom.cd)},
            "rom_solution": json.loads(rom["solution"].to_json()),
            "seconds": {"fom": t1 - t0, "rom": rom["timing"]["total"]},
        }
        if surrogate is not None:
            kr = pod_krig_predict(surrogate, db, theta, mesh=fom.mesh)
            case["cp_krig"] = kr["cp"].tolist()
            case["cl"]["krig"], case["cd"]["krig"] = kr["cl"], kr["cd"]
            case["errors"]["krig"] = error_metrics(kr["cp"], fom.cp, kr["cl"], fom.cl, kr["cd"], fom.cd)
            t_krig += time.perf_counter() - t2
        t_fom += t1 - t0
        t_rom += t2 - t1
        rep.cases.append(case)
    rep.timings = {"fom": t_fom, "rom": t_rom, "krig": t_krig}
    return rep


# -- genetic algorithm ---------------------------------------------------------------------

@dataclass
class GaSettings:
    population: int = 30
    generations: int = 60
    tournament: int = 3
    blend_alpha: float = 0.5
    mutation_rate: float = 0.1
    mutation_sigma: float = 0.05  # fraction of the box range
    elitism: int = 2
    penalty: float = 1e6

    def __post_init__(self):
        if self.population < 2 or self.generations < 0:
            raise ValueError("population must be >= 2 and generations >= 0")
        if not 0 <= self.elitism < self.population:
            raise ValueError("elitism must be smaller than the population")
        if not 1 <= self.tournament <= self.population:
            raise ValueError("tournament size must lie in [1, population]")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation rate must lie in [0, 1]")

    @property
    def max_evaluations(self) -> int:
        return self.population * (self.generations + 1)


@dataclass
class GaResult:
    best: np.ndarray
    best_fitness: float
    history: list  # (generation, best, mean)
    evaluations: int
    evaluated: np.ndarray
    failures: int = 0


def genetic_minimize(fn, lo, hi, settings: GaSettings | None = None, seed: int = 0) -> GaResult:
    """Minimise ``fn`` over the box ``[lo, hi]``.

    Tournament selection, blend crossover, per-gene Gaussian mutation and
    elitism; children are clipped to the box. Elites are carried over
    without re-evaluation. ``fn`` returning ``None`` or raising marks an
    individual failed and it receives ``settings.penalty``.
    """
    s = settings or GaSettings()
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    if np.any(hi < lo):
        raise ValueError("box bounds are inverted")
    rng = np.random.default_rng(seed)
    d = lo.size
    span = hi - lo
    evaluated, failures = [], 0

    def evaluate(X):
        nonlocal failures
        out = np.empty(len(X))
        for i, x in enumerate(X):
            evaluated.append(x.copy())
            try:
                v = fn(x)
            except (RomSolveError, FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
                log.debug("fitness failed at %s: %s", x, exc)
                v = None
            if v is None or not np.isfinite(v):
                failures += 1
                v = s.penalty
            out[i] = v
        return out

    pop = lo + rng.random((s.population, d)) * span
    fit = evaluate(pop)
    history = [(0, float(fit.min()), float(fit.mean()))]

    def pick():
        cand = rng.choice(s.population, size=s.tournament, replace=False)
        return pop[cand[np.argmin(fit[cand])]]

    for gen in range(1, s.generations + 1):
        order = np.argsort(fit, kind="stable")
        elites, elite_fit = pop[order[: s.elitism]].copy(), fit[order[: s.elitism]].copy()
        n_new = s.population - s.elitism
        kids = np.empty((n_new, d))
        for j in range(n_new):
            a, b = pick(), pick()
            u = rng.uniform(-s.blend_alpha, 1.0 + s.blend_alpha, size=d)
            child = a + u * (b - a)
            mut = rng.random(d) < s.mutation_rate
            child[mut] += rng.normal(0.0, s.mutation_sigma, mut.sum()) * span[mut]
            kids[j] = np.clip(child, lo, hi)
        pop = np.vstack([elites, kids])
        fit = np.concatenate([elite_fit, evaluate(kids)])
        history.append((gen, float(fit.min()), float(fit.mean())))
    b = int(np.argmin(fit))
    return GaResult(pop[b].copy(), float(fit[b]), history, len(evaluated), np.array(evaluated), failures)


def arc_fraction(xy) -> np.ndarray:
    """Normalised cumulative arc length along an ordered point sequence."""
    xy = np.asarray(xy, dtype=float)
    seg = np.hypot(*np.diff(xy, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] <= 0:
        raise ValueError("degenerate wall curve")
    return s / s[-1]


def resample_cp(cp_src, xy_src, xy_dst) -> np.ndarray:
    """Resample a wall C_P distribution by arc length; both point sets must
    be ordered along the wall in the same direction."""
    cp_src = np.asarray(cp_src, dtype=float)
    if len(xy_src) != cp_src.size:
        raise ValueError("C_P and coordinate counts differ")
    return np.interp(arc_fraction(xy_dst), arc_fraction(xy_src), cp_src)


def wall_order(mesh) -> np.ndarray:
    """Wall-face positions (within the wall patch) ordered along the wall."""
    wall = mesh.patch_faces("wall")
    return np.argsort(mesh.face_owner[wall], kind="stable")


def inverse_design(db: RomDatabase, target_cp, settings: GaSettings | None = None, seed: int = 0,
                   opts: SolveOptions | None = None, target_xy=None) -> GaResult:
    """GA search for the parameters whose ROM C_P matches ``target_cp``.

    ``target_cp`` is either on the database wall-face discretization, or
    given with wall-ordered coordinates ``target_xy`` and resampled.
    """
    opts = opts or SolveOptions(con_tol=1e-5, obj_tol=1e-3)
    lo, hi = db.case.bounds()
    ref = db.case.mesh_at(0.5 * (lo + hi))
    n_wall = ref.patch_faces("wall").size
    target = np.asarray(target_cp, dtype=float)
    if target.size != n_wall:
        if target_xy is None:
            raise ValueError(f"target has {target.size} points, wall has {n_wall}; coordinates needed to resample")
        order = wall_order(ref)
        xy = ref.face_centers[ref.patch_faces("wall")][order]
        resampled = resample_cp(target, target_xy, xy)
        target = np.empty(n_wall)
        target[order] = resampled

    def fitness(theta):
        cp = rom_evaluate(db, theta, opts)["cp"]
        r = cp - target
        return 0.5 * float(r @ r)

    return genetic_minimize(fitness, lo, hi, settings, seed)


# -- UQ -----------------------------------------------------------------------------------

def kde_grid(samples, bandwidth: float, n: int = 100, pad: float = 4.0) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    return np.linspace(samples.min() - pad * bandwidth, samples.max() + pad * bandwidth, n)


def gaussian_kde(samples, grid, bandwidth: float) -> np.ndarray:
    """Gaussian kernel density with a fixed absolute bandwidth."""
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    samples = np.asarray(samples, dtype=float).ravel()
    z = (np.asarray(grid, dtype=float)[:, None] - samples[None, :]) / bandwidth
    return np.exp(-0.5 * z * z).sum(axis=1) / (samples.size * bandwidth * np.sqrt(2.0 * np.pi))


def output_statistics(values) -> dict:
    """Mean, median, std and central-moment skewness/kurtosis (non-excess)."""
    v = np.asarray(values, dtype=float)
    sd = float(v.std())
    const = sd <= 1e-14 * max(1.0, abs(v.mean()))
    return {
        "mean": float(v.mean()),
        "median": float(np.median(v)),
        "std": 0.0 if const else sd,
        "skewness": float("nan") if const else float(stats.skew(v, bias=True)),
        "kurtosis": float("nan") if const else float(stats.kurtosis(v, fisher=False, bias=True)),
    }


def uq_study(db: RomDatabase, surrogate: PodKrigSurrogate | None, n_samples: int, seed: int,
             fom_control: int = 0, bandwidths=(0.017, 0.001), kde_points: int = 100,
             opts: SolveOptions | None = None, solver=None) -> dict:
    """Uniform Monte Carlo over the database box with both surrogates."""
    lo, hi = db.case.bounds()
    rng = np.random.default_rng(seed)
    thetas = lo + rng.random((n_samples, lo.size)) * (hi - lo)
    res = {"theta": thetas, "failed": {"rom": [], "krig": [], "fom": []}}
    for name in ("rom", "krig"):
        if name == "krig" and surrogate is None:
            continue
        cl = np.full(n_samples, np.nan)
        cd = np.full(n_samples, np.nan)
        for i, th in enumerate(thetas):
            try:
                out = rom_evaluate(db, th, opts) if name == "rom" else pod_krig_predict(surrogate, db, th)
            except (RomSolveError, FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
                res["failed"][name].append({"index": i, "error": str(exc)})
                continue
            cl[i], cd[i] = out["cl"], out["cd"]
        res[name] = {"cl": cl, "cd": cd}
    if fom_control:
        n = min(fom_control, n_samples)
        cl = np.full(n, np.nan)
        cd = np.full(n, np.nan)
        for i in range(n):
            try:
                f = run_fom(db.case, thetas[i], solver)
            except Exception as exc:  # noqa: BLE001 - any failure is recorded and excluded
                res["failed"]["fom"].append({"index": i, "error": str(exc)})
                continue
            cl[i], cd[i] = f.cl, f.cd
        res["fom"] = {"cl": cl, "cd": cd}
    res["stats"], res["kde"] = {}, {}
    for name in ("rom", "krig", "fom"):
        if name not in res:
            continue
        res["stats"][name] = {}
        for q, bw in (("cl", bandwidths[0]), ("cd", bandwidths[1])):
            v = res[name][q]
            v = v[np.isfinite(v)]
            if v.size == 0:
                continue
            res["stats"][name][q] = output_statistics(v)
    # one grid per quantity covering both methods
    for q, bw in (("cl", bandwidths[0]), ("cd", bandwidths[1])):
        vals = {n: res[n][q][np.isfinite(res[n][q])] for n in ("rom", "krig") if n in res}
        vals = {n: v for n, v in vals.items() if v.size}
        if not vals:
            continue
        g = kde_grid(np.concatenate(list(vals.values())), bw, kde_points)
        res["kde"][q] = {"grid": g, **{n: gaussian_kde(v, g, bw) for n, v in vals.items()}}
    return res


# -- report emission -------------------------------------------------------------------------

class ReportError(FileNotFoundError):
    pass


REPORT_SOURCES = ("validate/report.json", "uq/uq.json", "inverse/inverse.json")


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_report(run_dir) -> dict:
    """Turn run artefacts into plot-ready CSVs and a summary JSON."""
    run = Path(run_dir)
    found = [p for p in REPORT_SOURCES if (run / p).is_file()]
    if not found:
        raise ReportError(f"no run artefacts in {run}; expected any of: {', '.join(REPORT_SOURCES)}")
    out = run / "report"
    summary = {"run_dir": str(run), "sources": found, "files": []}
    if "validate/report.json" in found:
        rep = json.loads((run / "validate/report.json").read_text(encoding="utf-8"))
        for c in rep["cases"]:
            n = len(c["cp_fom"])
            krig = c.get("cp_krig", [float("nan")] * n)
            p = out / f"cp_case_{c['index']:02d}.csv"
            _write_csv(p, ["x", "cp_rom", "cp_krig", "cp_fom"], zip(c["x"], c["cp_rom"], krig, c["cp_fom"]))
            summary["files"].append(str(p.relative_to(run)))
        summary["validate"] = rep.get("summary", {})
    if "uq/uq.json" in found:
        uq = json.loads((run / "uq/uq.json").read_text(encoding="utf-8"))
        for q, curves in uq["kde"].items():
            names = [n for n in ("rom", "krig") if n in curves]
            p = out / f"kde_{q}.csv"
            _write_csv(p, [q] + [f"density_{n}" for n in names], zip(curves["grid"], *[curves[n] for n in names]))
            summary["files"].append(str(p.relative_to(run)))
        summary["uq"] = uq["stats"]
    if "inverse/inverse.json" in found:
        inv = json.loads((run / "inverse/inverse.json").read_text(encoding="utf-8"))
        p = out / "ga_history.csv"
        _write_csv(p, ["generation", "best", "mean"], inv["history"])
        summary["files"].append(str(p.relative_to(run)))
        summary["inverse"] = {k: inv[k] for k in ("best_theta", "best_fitness", "evaluations") if k in inv}
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(json.dumps(summary, indent=1), encoding="utf-8")
    return summary
