"""Seeded experiment suites, CSV emission, plots and decision-time comparisons.

A run expands the parameter grid, builds one instance per (grid point, seed)
with common random numbers across grid points, runs every method, re-validates
the allocation and records one row per method. Infeasible frames are rows with
``feasible=0`` and count as zero WSCR in the means.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import InstanceConfig, make_instance
from .ipm import SolverOptions
from .model import validate
from .strategy import (EX_CAP, METHODS, StrategyResult, baseline_lc, baseline_nc, baseline_sc,
                       exhaustive, priority_iterative, priority_strategy, solve_strategy)

CSV_VERSION = 1
VIOLATION_TOL = 1e-8
ORDER_RTOL = 1e-6
# "PM" solves the priority strategy at the grid's fixed m (per-m curve of the priority search)
ALL_METHODS = METHODS + ("PM",)
EXPERIMENT_IDS = ("fig6_wscr_vs_distance", "fig7_wscr_vs_iteration", "fig8_runtime_vs_N", "fig9_wscr_vs_N",
                  "fig10_wscr_vs_fhap", "fig11_wscr_vs_de", "fig12_mstar_vs_params", "custom")
COLUMNS = ("experiment", "point", "seed", "method", "m", "wscr", "effective_wscr", "feasible", "status",
           "worst_violation", "n_solves", "solve_ms", "strategy")


class InvariantError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    grid: dict
    methods: tuple
    n_seeds: int = 10
    base: InstanceConfig = field(default_factory=InstanceConfig)
    out: str | None = None
    ex_cap: int = EX_CAP
    seed: int = 0
    timing: bool = False
    dl_model: str | None = None
    dl_train_samples: int = 300

    def __post_init__(self):
        if self.experiment not in EXPERIMENT_IDS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENT_IDS}")
        grid = {k: tuple(v) if isinstance(v, (list, tuple)) else (v,) for k, v in dict(self.grid).items()}
        if not grid or any(len(v) == 0 for v in grid.values()):
            raise ValueError("grid must be non-empty")
        object.__setattr__(self, "grid", grid)
        methods = tuple(m.upper() for m in self.methods)
        bad = set(methods) - set(ALL_METHODS)
        if not methods or bad:
            raise ValueError(f"methods must be a non-empty subset of {ALL_METHODS}, got {sorted(bad)}")
        object.__setattr__(self, "methods", methods)
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")
        if "PM" in methods and "m" not in grid:
            raise ValueError("method PM needs an 'm' grid axis")
        for pt in self.points():
            cfg = self.config_at(pt)
            if "EX" in methods and cfg.n_devices > self.ex_cap:
                raise ValueError(f"EX requested at N={cfg.n_devices} above the cap {self.ex_cap}; "
                                 "drop EX or raise --ex-cap")

    def points(self) -> list:
        keys = list(self.grid)
        return [dict(zip(keys, vals)) for vals in itertools.product(*self.grid.values())]

    def config_at(self, point: dict) -> InstanceConfig:
        return self.base.updated(**{k: v for k, v in point.items() if k != "m"})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = {k: list(v) for k, v in self.grid.items()}
        d["methods"] = list(self.methods)
        d["base"] = _config_delta(self.base)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        base = d.pop("base", {}) or {}
        if not isinstance(base, InstanceConfig):
            base = InstanceConfig.from_dict(base)
        return cls(base=base, **d)


def _config_delta(cfg: InstanceConfig) -> dict:
    ref = InstanceConfig().to_dict()
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.to_dict().items() if ref[k] != v}


def load_spec(path) -> ExperimentSpec:
    text = Path(path).read_text()
    if str(path).endswith(".json"):
        data = json.loads(text)
    else:
        import yaml
        data = yaml.safe_load(text)
    return ExperimentSpec.from_dict(data)


def preset(name: str, n_seeds: int | None = None) -> ExperimentSpec:
    """Desk-scale versions of the standard sweeps."""
    P = {
        "fig6_wscr_vs_distance": dict(grid={"l_th": [4000.0, 8000.0], "d_mean": [3, 4, 5, 6, 7, 8]},
                                      methods=("PI", "NC", "SC", "LC"), n_seeds=50,
                                      base=InstanceConfig(n_devices=6)),
        "fig7_wscr_vs_iteration": dict(grid={"m": [0, 1, 2, 3, 4]}, methods=("PM",), n_seeds=50,
                                       base=InstanceConfig(n_devices=8)),
        "fig8_runtime_vs_N": dict(grid={"N": [5, 10, 20, 30]}, methods=("PI", "DL"), n_seeds=20,
                                  base=InstanceConfig(), timing=True, dl_train_samples=64),
        "fig9_wscr_vs_N": dict(grid={"N": [4, 6, 8]}, methods=("EX", "PI", "NC", "SC", "LC"), n_seeds=67,
                               base=InstanceConfig()),
        "fig10_wscr_vs_fhap": dict(grid={"f_ap": [0.5e9, 1e9, 2e9, 4e9]}, methods=("PI", "NC", "SC", "LC"),
                                   n_seeds=50, base=InstanceConfig(n_devices=6)),
        "fig11_wscr_vs_de": dict(grid={"d_e": [2.4, 2.6, 2.8, 3.0]}, methods=("PI", "NC", "SC", "LC"),
                                 n_seeds=50, base=InstanceConfig(n_devices=6)),
        "fig12_mstar_vs_params": dict(grid={"eta": [0.3, 0.51, 0.7], "f_ap": [0.5e9, 1e9, 4e9]},
                                      methods=("PI",), n_seeds=50, base=InstanceConfig(n_devices=6)),
    }
    if name not in P:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(P)}")
    kw = P[name]
    if n_seeds is not None:
        kw = dict(kw, n_seeds=n_seeds)
    return ExperimentSpec(experiment=name, **kw)


# -- running -------------------------------------------------------------------------

@dataclass
class ResultTable:
    spec: ExperimentSpec
    rows: list
    failures: list = field(default_factory=list)

    def select(self, **kw) -> list:
        return [r for r in self.rows if all(r.get(k) == v for k, v in kw.items())]

    def aggregate(self) -> list:
        """Means over seeds per (grid point, method)."""
        keys = list(self.spec.grid)
        groups: dict = {}
        for r in self.rows:
            groups.setdefault((tuple(r[k] for k in keys), r["method"]), []).append(r)
        out = []
        for (vals, method), rs in groups.items():
            feas = [r for r in rs if r["feasible"]]
            out.append({**dict(zip(keys, vals)), "method": method, "n": len(rs),
                        "mean_wscr": float(np.mean([r["effective_wscr"] for r in rs])),
                        "feasible_fraction": len(feas) / len(rs),
                        "mean_m": float(np.mean([r["m"] for r in feas])) if feas else float("nan"),
                        "mean_ms": float(np.mean([r["solve_ms"] for r in rs]))})
        return out

    def series(self, method: str, x: str, y: str = "mean_wscr", **fixed) -> tuple:
        """(x values, y values) of one aggregated curve, other grid axes pinned by ``fixed``."""
        agg = [a for a in self.aggregate() if a["method"] == method
               and all(a[k] == v for k, v in fixed.items())]
        agg.sort(key=lambda a: a[x])
        return [a[x] for a in agg], [a[y] for a in agg]

    def to_csv(self, path=None, timing: bool | None = None) -> str:
        timing = self.spec.timing if timing is None else timing
        buf = io.StringIO()
        buf.write(f"# wpmec-results v{CSV_VERSION} experiment={self.spec.experiment} "
                  f"spec={json.dumps(self.spec.to_dict(), sort_keys=True)}\n")
        keys = list(self.spec.grid)
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(keys + list(COLUMNS))
        for r in self.rows:
            vals = [repr(r[k]) if isinstance(r[k], float) else r[k] for k in keys]
            row = []
            for c in COLUMNS:
                v = r[c]
                if c == "solve_ms":
                    v = f"{v:.3f}" if timing else ""
                elif isinstance(v, float):
                    v = repr(v)
                row.append(v)
            wr.writerow(vals + row)
        text = buf.getvalue()
        if path is not None:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            Path(path).write_text(text)
        return text


def _sc_seed(seed: int) -> int:
    return int(np.random.SeedSequence([int(seed), 3]).generate_state(1)[0])


def _row(spec, point, pidx, seed, res: StrategyResult, instance) -> dict:
    viol = res.worst_violation
    if res.allocation is not None and res.feasible:
        viol = validate(instance, res.strategy, res.allocation).worst_relative
    return {**point, "experiment": spec.experiment, "point": pidx, "seed": seed, "method": res.method,
            "m": res.m, "wscr": float(res.wscr), "effective_wscr": float(res.effective_wscr),
            "feasible": int(res.feasible), "status": res.status, "worst_violation": float(viol),
            "n_solves": res.n_solves, "solve_ms": float(res.solve_ms), "strategy": str(res.strategy)}


def run_method(method: str, instance, seed: int, options=None, predictor=None, m=None,
               ex_cap: int = EX_CAP) -> StrategyResult:
    if method == "EX":
        return exhaustive(instance, ex_cap, options)
    if method == "PI":
        return priority_iterative(instance, options)
    if method == "NC":
        return baseline_nc(instance, options)
    if method == "LC":
        return baseline_lc(instance)
    if method == "SC":
        return baseline_sc(instance, _sc_seed(seed), options)
    if method == "DL":
        from .dnn import dl_solve
        return dl_solve(instance, predictor, options)
    if method == "PM":
        return solve_strategy(instance, priority_strategy(instance, min(int(m), instance.N // 2)), "PM", options)
    raise ValueError(f"unknown method {method!r}")


def _predictors_for(spec, predictors):
    """Load or train one predictor per device count the experiment needs."""
    from .dnn import generate_dataset, load_predictor, train
    out = dict(predictors or {})
    if spec.dl_model:
        p = load_predictor(spec.dl_model)
        out.setdefault(p.N, p)
    for pt in spec.points():
        cfg = spec.config_at(pt)
        if cfg.n_devices not in out:
            ds = generate_dataset(spec.base.updated(N=cfg.n_devices), spec.dl_train_samples,
                                  seed=spec.seed + 10_000, redraw_weights=True)
            out[cfg.n_devices] = train(ds, seed=spec.seed)
    return out


def check_rows(rows, keys) -> list:
    """Invariant failures: re-validation above tolerance, or LC <= NC <= PI <= EX broken."""
    fails = []
    for r in rows:
        if r["feasible"] and r["worst_violation"] > VIOLATION_TOL:
            fails.append(f"point {r['point']} seed {r['seed']} {r['method']}: "
                         f"violation {r['worst_violation']:.3g}")
    by: dict = {}
    for r in rows:
        by.setdefault((r["point"], r["seed"]), {})[r["method"]] = r["effective_wscr"]
    chain = ("LC", "NC", "PI", "EX")
    for (pidx, seed), vals in by.items():
        present = [m for m in chain if m in vals]
        for a, b in zip(present, present[1:]):
            if vals[a] > vals[b] + ORDER_RTOL * max(abs(vals[b]), abs(vals[a])):
                fails.append(f"point {pidx} seed {seed}: {a}={vals[a]!r} > {b}={vals[b]!r}")
    return fails


def run(spec: ExperimentSpec, options: SolverOptions | None = None, predictors=None,
        strict: bool = False) -> ResultTable:
    """Run every (grid point, seed, method); ``strict`` raises on invariant failures."""
    preds = _predictors_for(spec, predictors) if "DL" in spec.methods else {}
    rows = []
    for pidx, pt in enumerate(spec.points()):
        cfg = spec.config_at(pt)
        for s in range(spec.n_seeds):
            seed = spec.seed + s
            inst = make_instance(cfg, seed)
            for method in spec.methods:
                res = run_method(method, inst, seed, options, preds.get(cfg.n_devices), pt.get("m"), spec.ex_cap)
                rows.append(_row(spec, pt, pidx, seed, res, inst))
    table = ResultTable(spec, rows, check_rows(rows, list(spec.grid)))
    if strict and table.failures:
        raise InvariantError("; ".join(table.failures[:10]))
    if spec.out:
        table.to_csv(spec.out)
    return table


# -- timing --------------------------------------------------------------------------

def timing_suite(N_list, methods=("PI", "DL"), n_seeds: int = 10, base: InstanceConfig | None = None,
                 predictors=None, seed: int = 0, ex_cap: int = EX_CAP, train_samples: int = 64,
                 repeats: int = 1) -> dict:
    """Wall time per decision for each (N, method); EX is skipped above ``ex_cap``.

    Each decision is timed ``repeats`` times and the minimum is kept, which
    filters scheduler noise on a shared machine.

    Returns {"rows": [...], "summary": {(N, method): mean_ms}, "skipped": [...]}.
    Predictors missing for DL are trained on a small dataset, which does not
    change the cost of a decision.
    """
    from .dnn import TrainParams, dl_solve, generate_dataset, train
    base = base or InstanceConfig()
    preds = dict(predictors or {})
    rows, skipped = [], []
    for N in N_list:
        cfg = base.updated(N=N)
        if "DL" in methods and N not in preds:
            ds = generate_dataset(cfg, train_samples, seed=seed + 10_000, redraw_weights=True)
            preds[N] = train(ds, TrainParams(epochs=20), seed=seed)
        insts = [make_instance(cfg, seed + s) for s in range(n_seeds)]
        for method in methods:
            if method == "EX" and N > ex_cap:
                skipped.append((N, method))
                continue
            # warm-up outside the clock
            run_method(method, insts[0], seed, predictor=preds.get(N), ex_cap=ex_cap)
            for s, inst in enumerate(insts):
                ms = np.inf
                for _ in range(max(1, repeats)):
                    t0 = time.perf_counter()
                    res = run_method(method, inst, seed + s, predictor=preds.get(N), ex_cap=ex_cap)
                    ms = min(ms, (time.perf_counter() - t0) * 1e3)
                rows.append({"N": N, "method": method, "seed": seed + s, "decision_ms": ms,
                             "n_solves": res.n_solves, "feasible": int(res.feasible)})
    summary = {}
    for r in rows:
        summary.setdefault((r["N"], r["method"]), []).append(r["decision_ms"])
    summary = {k: float(np.mean(v)) for k, v in summary.items()}
    return {"rows": rows, "summary": summary, "skipped": skipped}


def timing_csv(result: dict, path=None) -> str:
    buf = io.StringIO()
    buf.write(f"# wpmec-timing v{CSV_VERSION}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["N", "method", "seed", "decision_ms", "n_solves", "feasible"])
    for r in result["rows"]:
        wr.writerow([r["N"], r["method"], r["seed"], f"{r['decision_ms']:.3f}", r["n_solves"], r["feasible"]])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


# -- plots ---------------------------------------------------------------------------

def emit_plot(table: ResultTable, path, x: str | None = None, y: str | None = None) -> Path:
    """One SVG line chart; one series per method (and per value of any other grid axis)."""
    if not table.rows:
        raise ValueError("cannot plot an empty table")
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    spec = table.spec
    keys = list(spec.grid)
    x = x or keys[-1]
    if y is None:
        y = "mean_m" if spec.experiment == "fig12_mstar_vs_params" else (
            "mean_ms" if spec.experiment == "fig8_runtime_vs_N" else "mean_wscr")
    others = [k for k in keys if k != x]
    agg = table.aggregate()
    series: dict = {}
    for a in agg:
        label = a["method"] + "".join(f", {k}={a[k]:g}" for k in others)
        series.setdefault(label, []).append((a[x], a[y]))
    with matplotlib.rc_context({"svg.hashsalt": "wpmec", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label in sorted(series):
            pts = sorted(series[label])
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=label)
        ax.set_xlabel(x)
        ax.set_ylabel(y)
        ax.set_title(spec.experiment)
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    return path
