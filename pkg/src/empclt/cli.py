"""Experiment orchestration: JSON configs in, CSV/JSON reports plus a
manifest out.

Output bytes are a pure function of (config, tool version): every random
quantity comes from counter-based streams keyed by the master seed, worker
pools only split fixed-size chunks of the replicate range, and chunk results
are reduced in index order.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import multiprocessing
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import empirical_clt as ec
from . import lcondition as lc
from . import metrics as mt
from . import shattering as sh
from . import chaining as ch
from .grids import TimeGrid, discrete_grid, dyadic_grid, uniform_grid
from .process_models import ProcessSpec, analytic_cdf
from .rng import SeedSpec
from . import transform as tr

EXPERIMENTS = ("transform", "lcond", "metrics", "cltcheck", "shatter", "chain", "prop2")
OUTPUT_DIR_ENV = "EMPCLT_OUT"
REP_CHUNK = 125  # fixed chunk size keeps results independent of worker count


@dataclass
class ExperimentConfig:
    experiment: str
    process: ProcessSpec | None = None
    grid: TimeGrid | None = None
    replicates: int = 10_000
    n_ladder: tuple = ()
    eps_grid: tuple = ()
    trials: int = 100
    master_seed: int = 0
    workers: int = 1
    output_dir: str = "out"
    options: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        process = ProcessSpec.from_json(obj["process"]) if "process" in obj else None
        grid = _grid_from_json(obj["grid"]) if "grid" in obj else None
        return cls(
            experiment=obj.get("experiment", ""),
            process=process,
            grid=grid,
            replicates=int(obj.get("replicates", 10_000)),
            n_ladder=tuple(obj.get("n-ladder", ())),
            eps_grid=tuple(obj.get("eps-grid", ())),
            trials=int(obj.get("trials", 100)),
            master_seed=int(obj.get("master-seed", 0)),
            workers=int(obj.get("workers", 1)),
            output_dir=obj.get("output-dir", "out"),
            options=dict(obj.get("options", {})),
        )

    def to_json(self) -> dict:
        out = {
            "experiment": self.experiment,
            "replicates": self.replicates,
            "n-ladder": list(self.n_ladder),
            "eps-grid": list(self.eps_grid),
            "trials": self.trials,
            "master-seed": self.master_seed,
            "workers": self.workers,
            "output-dir": self.output_dir,
            "options": self.options,
        }
        if self.process is not None:
            out["process"] = self.process.to_json()
        if self.grid is not None:
            out["grid"] = self.grid.to_json()
        return out


def _grid_from_json(obj: dict) -> TimeGrid:
    if "points" in obj:
        return TimeGrid.from_json(obj)
    kind = obj["kind"]
    if kind == "interval-1d":
        if "dyadic-depth" in obj:
            return dyadic_grid(int(obj["dyadic-depth"]), obj.get("horizon", 1.0))
        return uniform_grid(int(obj["uniform-count"]), obj.get("horizon", 1.0), obj.get("start", 0.0))
    if kind == "discrete-n":
        return discrete_grid(int(obj["count"]))
    raise ValueError(f"cannot build grid from {obj!r}")


def validate(config: ExperimentConfig) -> list:
    """Empty list iff run() would accept the config."""
    bad = []
    if config.experiment not in EXPERIMENTS:
        bad.append(f"experiment: unknown {config.experiment!r}")
    if config.workers < 1:
        bad.append("workers: must be >= 1")
    if config.master_seed < 0 or config.master_seed >= 2**64:
        bad.append("master-seed: must fit in 64 bits")
    for name in ("replicates", "trials"):
        if getattr(config, name) <= 0:
            bad.append(f"{name}: must be positive")
    if any(n <= 0 for n in config.n_ladder):
        bad.append("n-ladder: entries must be positive")
    if any(e <= 0 for e in config.eps_grid):
        bad.append("eps-grid: entries must be positive")
    if config.process is not None and config.grid is not None:
        if config.grid.kind != config.process.grid_kind():
            bad.append(
                f"grid: family {config.process.family} requires kind "
                f"{config.process.grid_kind()}, got {config.grid.kind}"
            )
    needs_model = {"lcond", "metrics", "cltcheck", "shatter", "chain"}
    if config.experiment in needs_model:
        variant = config.options.get("variant", "")
        modified = config.experiment == "lcond" and variant == "modified"
        if not modified:
            if config.process is None:
                bad.append("process: required")
            if config.grid is None:
                bad.append("grid: required")
    if config.experiment == "lcond" and config.options.get("variant", "weak") not in (
        "weak",
        "strong",
        "modified",
    ):
        bad.append("options.variant: must be weak, strong, or modified")
    if config.experiment == "lcond" and config.options.get("variant") != "modified" and not config.eps_grid:
        bad.append("eps-grid: required for lcond")
    if config.experiment in ("cltcheck", "shatter") and not config.n_ladder:
        bad.append("n-ladder: required")
    if config.experiment == "prop2" and "pt-family" not in config.options:
        bad.append("options.pt-family: required")
    return bad


@dataclass
class RunManifest:
    config_hash: str
    version: str
    wall_time_s: float
    outputs: dict  # filename -> sha256

    def to_json(self) -> dict:
        return {
            "config-hash": self.config_hash,
            "tool-version": self.version,
            "wall-time-s": self.wall_time_s,
            "outputs": self.outputs,
        }


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _write_csv(path: str, rows: list) -> None:
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = list(rows[0].keys())
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row[k]) for k in header])


def _write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return h.hexdigest()


def _parallel_map(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with multiprocessing.Pool(min(workers, len(tasks))) as pool:
        return pool.map(fn, tasks)


def _rep_chunks(total: int):
    return [(a, min(a + REP_CHUNK, total)) for a in range(0, total, REP_CHUNK)]


# ---------------------------------------------------------------------------
# experiment pipelines; worker functions are top level so they pickle
# ---------------------------------------------------------------------------

_TRANSFORM_BATTERY = (
    ("bernoulli-0.3", tr.TwoPointCdf(0.3), lambda rg, size: (rg.random(size) < 0.3).astype(float)),
    ("point-mass", tr.DegenerateCdf(0.0), lambda rg, size: np.zeros(size)),
    ("uniform-01", tr.UniformCdf(0.0, 1.0), lambda rg, size: rg.random(size)),
    (
        "mixed-atom-uniform",
        tr.MixtureCdf([(1.0 / 3.0, tr.DegenerateCdf(0.5)), (2.0 / 3.0, tr.UniformCdf(0.0, 1.0))]),
        lambda rg, size: np.where(rg.random(size) < 1.0 / 3.0, 0.5, rg.random(size)),
    ),
)


def _transform_task(args):
    pos, n, master_seed = args
    name, cdf, draw = _TRANSFORM_BATTERY[pos]
    ks = tr.uniformity_check(cdf, draw, n, SeedSpec(master_seed, pos))
    return {"dist": name, "n": n, "ks": ks}


def _run_transform(config: ExperimentConfig, outdir: str) -> list:
    tasks = [(pos, config.replicates, config.master_seed) for pos in range(len(_TRANSFORM_BATTERY))]
    rows = _parallel_map(_transform_task, tasks, config.workers)
    path = os.path.join(outdir, "transform.csv")
    _write_csv(path, rows)
    return [path]


def _run_lcond(config: ExperimentConfig, outdir: str) -> list:
    variant = config.options.get("variant", "weak")
    seed = SeedSpec(config.master_seed)
    alpha = float(config.options.get("alpha", 0.5))
    theta = config.options.get("theta")
    if variant == "modified":
        report = lc.exact_modified_l(
            pt_family=config.options.get("pt-family", "log-power(2)"),
            h_variance_family=config.options.get("h-variance-family", "log-power(1.5)"),
            t_max=int(config.options.get("t-max", 10**6)),
            eps_grid=np.asarray(config.eps_grid) if config.eps_grid else None,
        )
    else:
        estimator = lc.estimate_strong_l if variant == "strong" else lc.estimate_weak_l
        report = estimator(
            config.process,
            config.grid,
            config.eps_grid,
            config.replicates,
            seed,
            alpha,
            theta,
            use_transform=bool(config.options.get("use-transform", True)),
            threshold_scale=float(config.options.get("threshold-scale", 1.0)),
        )
    path = os.path.join(outdir, "lcond.csv")
    _write_csv(path, report.csv_rows())
    summary = os.path.join(outdir, "lcond-summary.json")
    _write_json(summary, {"variant": report.variant, "l-hat": report.l_hat, "meta": _plain(report.meta)})
    return [path, summary]


def _run_metrics(config: ExperimentConfig, outdir: str) -> list:
    seed = SeedSpec(config.master_seed)
    check = config.options.get("check", "lemma1")
    l_value = float(config.options.get("l-value", 0.0))
    alpha = float(config.options.get("alpha", 0.5))
    theta = config.options.get("theta")
    pts = list(config.grid)
    if check == "lemma1":
        pairs = list(zip(pts, pts[1:]))[:: max(1, len(pts) // 8)]
        rows = []
        for k, (s, t) in enumerate(pairs):
            rep = mt.check_lemma1(
                config.process, s, t, config.replicates, SeedSpec(config.master_seed, k), l_value, alpha, theta
            )
            rows.extend(rep.csv_rows())
    elif check == "corollary1":
        lo = float(config.options.get("b-lo", pts[0]))
        hi = float(config.options.get("b-hi", pts[-1]))
        b_points = [p for p in pts if lo <= p <= hi]
        d_int = tuple(config.options.get("d-interval", (0.0, 1.0)))
        rep = mt.check_corollary1_diameter(
            config.process, b_points, b_points[len(b_points) // 2], d_int,
            config.replicates, seed, l_value, alpha, theta,
        )
        rows = rep.csv_rows()
    elif check == "theorem5":
        rep = mt.check_theorem5_conditions(
            config.process,
            config.grid,
            beta=float(config.options.get("beta", 1.0)),
            k=float(config.options.get("k", 1.0)),
            eta=float(config.options.get("eta", 4.0)),
            alpha=alpha,
            theta=theta,
            n=config.replicates,
            seed=seed,
        )
        rows = rep.csv_rows()
    else:
        raise ValueError(f"unknown metrics check {check!r}")
    path = os.path.join(outdir, "metrics.csv")
    _write_csv(path, rows)
    return [path]


def _sup_chunk(args):
    source, master_seed, start, stop = args
    return source.sample_range(master_seed, start, stop)


def _run_cltcheck(config: ExperimentConfig, outdir: str) -> list:
    reps = int(config.options.get("reps", 2000))
    levels = int(config.options.get("levels", 64))
    threshold = float(config.options.get("ks-threshold", 0.08))
    index = ec.default_index(config.process, config.grid, levels)

    limit_kind = config.options.get("limit", "estimated")
    if limit_kind == "tied-down-wiener":
        rs = sorted({ec._linear_u_level(ip) for ip in index})
        limit_source = ec.TiedDownWienerSupSource(rs)
    elif limit_kind == "analytic-linear-u":
        limit_source = ec.GaussianSupSource(ec.linear_u_limit_model(index))
    else:
        model = ec.estimate_limit_field(
            config.process, index, int(config.options.get("limit-m", 20000)), SeedSpec(config.master_seed, 1)
        )
        limit_source = ec.GaussianSupSource(model)

    def gather(source):
        chunks = _parallel_map(
            _sup_chunk,
            [(source, config.master_seed, a, b) for a, b in _rep_chunks(reps)],
            config.workers,
        )
        return np.concatenate(chunks)

    limit_sups = gather(limit_source)
    rows = []
    sample_rows = [{"source": "limit", "rep": i, "sup": float(v)} for i, v in enumerate(limit_sups)]
    ks_values = []
    for n in config.n_ladder:
        sups = gather(ec.EmpiricalSupSource(config.process, index, n))
        ks = ec.ks_two_sample(sups, limit_sups)
        ks_values.append(ks)
        rows.append({"n": n, "ks": ks, "stderr": math.sqrt(2.0 / reps), "verdict": ""})
        sample_rows.extend({"source": f"empirical-{n}", "rep": i, "sup": float(v)} for i, v in enumerate(sups))
    decreasing = all(b < a for a, b in zip(ks_values, ks_values[1:]))
    verdict = "consistent" if decreasing and ks_values[-1] < threshold else "inconsistent"
    for row in rows:
        row["verdict"] = verdict
    path = os.path.join(outdir, "cltcheck.csv")
    _write_csv(path, rows)
    raw = os.path.join(outdir, "cltcheck-sups.csv")
    _write_csv(raw, sample_rows)
    return [path, raw]


def _shatter_chunk(args):
    spec, grid, n, master_seed, start, stop = args
    counts = []
    for trial in range(start, stop):
        vals = sh.generate_paths(spec, grid, n, master_seed, trial, label=sh.TRIALS)
        counts.append(sh.registry_from_values(vals).count)
    return counts


def _run_shatter(config: ExperimentConfig, outdir: str) -> list:
    rows = []
    for n in config.n_ladder:
        tasks = [
            (config.process, config.grid, n, config.master_seed, a, b)
            for a, b in _rep_chunks(config.trials)
        ]
        counts = [c for chunk in _parallel_map(_shatter_chunk, tasks, config.workers) for c in chunk]
        for trial, count in enumerate(counts):
            rows.append(
                {
                    "trial": trial,
                    "n": n,
                    "count": count,
                    "ln_count_over_sqrt_n": math.log(count) / math.sqrt(n),
                }
            )
    path = os.path.join(outdir, "shatter.csv")
    _write_csv(path, rows)
    outputs = [path]
    if config.options.get("witnesses"):
        n = int(config.options.get("witness-n", 4))
        j_count = int(config.options.get("witness-intervals", 400))
        _, witnesses = sh.lemma8_construct(n, j_count, SeedSpec(config.master_seed))
        wpath = os.path.join(outdir, "witnesses.json")
        _write_json(wpath, witnesses.to_json())
        outputs.append(wpath)
    return outputs


def _run_chain(config: ExperimentConfig, outdir: str) -> list:
    alpha = float(config.options.get("alpha", 0.5))
    theta = config.options.get("theta")
    max_level = int(config.options.get("max-level", 6))
    y_count = int(config.options.get("y-count", 8))
    rho = mt.rho_table(config.process, config.grid, alpha, theta)
    some_t = config.grid.points[len(config.grid) // 2]
    ys = mt.quantile_grid([analytic_cdf(config.process, some_t)], y_count)
    chain = ch.composed_admissible(
        rho,
        lambda t: analytic_cdf(config.process, t),
        ys,
        max_level,
        l_value=float(config.options.get("l-value", 0.0)),
    )
    tree_path = os.path.join(outdir, "chain-tree.json")
    _write_json(tree_path, chain.sequence.to_json())
    seq = chain.sequence
    point_table = mt.PseudoMetricTable(
        points=list(range(seq.size)),
        d=_product_metric(chain, rho),
    )
    rows = []
    for level in range(len(seq.levels)):
        diams = [point_table.diameter(list(cell)) for cell in seq.levels[level]]
        rows.append(
            {
                "level": level,
                "card": len(seq.levels[level]),
                "max_diameter": max(diams),
                "gamma_tail_from_here": ch.gamma_sum_tail(seq, point_table, level),
            }
        )
    csv_path = os.path.join(outdir, "chain-levels.csv")
    _write_csv(csv_path, rows)
    return [tree_path, csv_path]


def _product_metric(chain: ch.ComposedChain, rho: mt.PseudoMetricTable) -> np.ndarray:
    """rho lifted to the product points (thresholds ignored): enough for
    per-level diameter reporting."""
    k = len(chain.points)
    d = np.zeros((k, k))
    t_index = {p: i for i, p in enumerate(rho.points)}
    for a in range(k):
        ta = t_index[chain.points[a][0]]
        for b in range(a + 1, k):
            tb = t_index[chain.points[b][0]]
            d[a, b] = d[b, a] = rho.d[ta, tb]
    return d


def _run_prop2(config: ExperimentConfig, outdir: str) -> list:
    pt_family = config.options["pt-family"]
    report = lc.proposition2_criteria(
        pt_family,
        t_max=int(config.options.get("t-max", 10**6)),
        r_grid=tuple(config.options.get("r-grid", (0.5, 1.0, 2.0))),
    )
    modified = lc.exact_modified_l(
        pt_family=pt_family,
        t_max=int(config.options.get("t-max", 10**6)),
    )
    path = os.path.join(outdir, "prop2.csv")
    _write_csv(path, report.csv_rows())
    verdicts = {
        "pt-family": pt_family,
        "pregaussian": bool(report.pregaussian),
        "clt": bool(report.clt),
        "modified-l-max-prob": modified.meta["max_prob"],
        "modified-l-hat": modified.l_hat,
    }
    vpath = os.path.join(outdir, "prop2-verdicts.json")
    _write_json(vpath, verdicts)
    return [path, vpath]


_PIPELINES = {
    "transform": _run_transform,
    "lcond": _run_lcond,
    "metrics": _run_metrics,
    "cltcheck": _run_cltcheck,
    "shatter": _run_shatter,
    "chain": _run_chain,
    "prop2": _run_prop2,
}


def _plain(obj):
    """JSON-safe copy of report metadata."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (int, float, str, bool)) or obj is None:
        return obj
    return str(obj)


def run(config: ExperimentConfig) -> RunManifest:
    """Validate, dispatch, write outputs plus manifest; returns the manifest."""
    violations = validate(config)
    if violations:
        raise ValueError("invalid config: " + "; ".join(violations))
    started = time.monotonic()
    outdir = config.output_dir
    os.makedirs(outdir, exist_ok=True)
    outputs = _PIPELINES[config.experiment](config, outdir)
    canonical = json.dumps(config.to_json(), sort_keys=True, separators=(",", ":"))
    manifest = RunManifest(
        config_hash=hashlib.sha256(canonical.encode()).hexdigest(),
        version=__version__,
        wall_time_s=time.monotonic() - started,
        outputs={os.path.basename(p): _sha256(p) for p in outputs},
    )
    _write_json(os.path.join(outdir, "manifest.json"), manifest.to_json())
    return manifest


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="empclt", description="Empirical-process CLT laboratory")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override master seed")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
    args = parser.parse_args(argv)

    with open(args.config) as fh:
        obj = json.load(fh)
    obj["experiment"] = args.experiment
    config = ExperimentConfig.from_json(obj)
    if args.seed is not None:
        config.master_seed = args.seed
    if args.workers is not None:
        config.workers = args.workers
    if args.out is not None:
        config.output_dir = args.out
    elif os.environ.get(OUTPUT_DIR_ENV) and "output-dir" not in obj:
        config.output_dir = os.environ[OUTPUT_DIR_ENV]

    violations = validate(config)
    if violations:
        record = {"error": "invalid-config", "violations": violations}
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return 2
    try:
        manifest = run(config)
    except Exception as exc:  # noqa: BLE001 - surface a machine-readable record
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return 1
    print(json.dumps(manifest.to_json(), sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
