"""Batch experiment runner.

Each experiment turns a model and a parameter map into a report: a summary
JSON, tables in CSV and plot-data files with x/y columns.  Outputs depend only
on the configuration, so repeated runs are byte identical.

Exit codes: 0 success, 1 failed consistency check, 2 bad configuration,
3 precision failure, 4 unwritable output directory.
"""

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from importlib import resources

import numpy as np

from . import engine, functionals, model as models, oracles, ray_stats, renewal, spine
from .errors import BrwError, ModelError, PrecisionError, UnsupportedError
from .rng import mix

EXPERIMENTS = ("tstar", "classify", "grow-stats", "many-to-one-check", "line-moments", "renewal", "tail-dp",
               "scaling", "discounted", "consistent-path")
THREADS_ENV = "BRWLAB_THREADS"

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_PRECISION, EXIT_OUTPUT = 0, 1, 2, 3, 4


class ConfigError(BrwError):
    pass


@dataclass
class ExperimentConfig:
    model: str
    experiment: str
    parameters: dict = field(default_factory=dict)
    seed: int = 0
    replicas: int = 1
    out: str = "brwlab-out"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if not isinstance(self.parameters, dict):
            raise ConfigError("parameters must be a mapping")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in 64 bits")
        if int(self.replicas) < 1:
            raise ConfigError("replicas must be positive")

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        missing = {"model", "experiment"} - set(d)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        return cls(**d)

    def canonical(self):
        d = asdict(self)
        d.pop("out")
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


@dataclass
class Report:
    summary: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    plots: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)


class Replicas:
    """Per-replica values keyed by replica index; reductions ignore merge order."""

    def __init__(self, values=None):
        self.values = dict(values or {})

    def merge(self, other):
        clash = set(self.values) & set(other.values)
        if clash:
            raise ValueError(f"replicas merged twice: {sorted(clash)}")
        return Replicas({**self.values, **other.values})

    def ordered(self):
        return [self.values[i] for i in sorted(self.values)]

    def mean(self):
        v = self.ordered()
        return math.fsum(v) / len(v)

    def stderr(self):
        v = self.ordered()
        if len(v) < 2:
            return math.nan
        m = math.fsum(v) / len(v)
        return math.sqrt(math.fsum((x - m) ** 2 for x in v) / (len(v) - 1) / len(v))

    def median(self):
        return float(np.median(self.ordered()))


# ---------------------------------------------------------------------------
# helpers


def resolve_model(spec):
    """A bundled model name or a path to a model JSON file."""
    if spec in models.BUNDLED:
        return models.BUNDLED[spec]()
    if os.path.exists(spec):
        return models.load_model(spec)
    bundled = resources.files("brwlab") / "data" / f"{spec}.json"
    if bundled.is_file():
        return models.OffspringModel.from_json(json.loads(bundled.read_text()))
    raise ConfigError(f"no model named or stored at {spec!r}")


def run_replicas(fn, seed, replicas):
    """Run ``fn(replica_seed)`` for each replica, replica i seeded by ``mix(seed, i)``."""
    threads = int(os.environ.get(THREADS_ENV, os.cpu_count() or 1))
    seeds = [mix(seed, i) for i in range(replicas)]
    if threads <= 1 or replicas == 1:
        results = [fn(s) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(fn, seeds))
    return results


def _param(p, key, default, kind=None):
    v = p.get(key, default)
    try:
        return kind(v) if kind is not None and v is not None else v
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"parameter {key!r}: {exc}") from None


def _check_params(p, allowed):
    extra = set(p) - set(allowed)
    if extra:
        raise ConfigError(f"unknown parameters: {sorted(extra)}")


def _functional(name):
    if name == "constant":
        return functionals.Constant()
    if name == "visits0":
        return functionals.VisitCount(0)
    if name.startswith("min>="):
        return functionals.MinAtLeast(int(name[5:]))
    if name.startswith("pattern:"):
        return functionals.IncrementPattern(tuple(int(s) for s in name[8:].split(",")))
    raise ConfigError(f"unknown functional {name!r}")


# ---------------------------------------------------------------------------
# experiments


def exp_tstar(m, cfg):
    _check_params(cfg.parameters, ())
    t = models.find_tstar(m)
    return Report(summary={"tstar": t, "phi_at_tstar": models.log_laplace(m, t)})


def exp_classify(m, cfg):
    _check_params(cfg.parameters, ())
    return Report(summary=models.classify_hypotheses(m).as_dict())


def exp_grow_stats(m, cfg):
    p = cfg.parameters
    _check_params(p, ("depth", "max_population", "barrier"))
    depth = _param(p, "depth", 8, int)
    cap = _param(p, "max_population", engine.DEFAULT_MAX_POPULATION, int)
    tstar = models.find_tstar(m)
    controls = engine.GrowthControls(max_generation=depth, max_population=cap,
                                     barrier=_param(p, "barrier", None, float))

    def one(seed):
        tree = engine.grow(m, controls, seed)
        mart = engine.additive_martingale(tree, tstar)
        mart = np.pad(mart, (0, depth + 1 - len(mart)))
        return tree.per_generation_counts, mart, tree.truncated

    res = run_replicas(one, cfg.seed, cfg.replicas)
    rows = []
    per_gen = [Replicas() for _ in range(depth + 1)]
    for i, (counts, mart, trunc) in enumerate(res):
        for g in range(depth + 1):
            c = int(counts[g]) if g < len(counts) else 0
            rows.append([i, g, c, mart[g], int(trunc)])
            per_gen[g] = per_gen[g].merge(Replicas({i: float(mart[g])}))
    means = [r.mean() for r in per_gen]
    errs = [r.stderr() for r in per_gen]
    plot = [[g, means[g], errs[g]] for g in range(depth + 1)]
    return Report(summary={"martingale_mean": means, "martingale_stderr": errs,
                           "truncated_replicas": sum(int(r[2]) for r in res)},
                  tables={"generations": (["replica", "generation", "count", "martingale", "truncated"], rows)},
                  plots={"martingale": (["generation", "mean", "stderr"], plot)})


def exp_many_to_one(m, cfg):
    p = cfg.parameters
    _check_params(p, ("depth", "functionals", "tol"))
    depth = _param(p, "depth", 6, int)
    names = _param(p, "functionals", ["constant", "visits0", "min>=-1"])
    tol = _param(p, "tol", 1e-9, float)
    law = models.spine_law(m)
    rows, ok = [], True
    for name in names:
        f = _functional(name)
        for k in range(depth + 1):
            tree_side = float(oracles.exact_expectation_dp(m, k, f))
            spine_side = float(spine.spine_expectation(law, f, k))
            diff = abs(tree_side - spine_side)
            ok &= diff <= tol * max(1.0, abs(tree_side))
            rows.append([name, k, tree_side, spine_side, diff])
    return Report(summary={"max_difference": max(r[4] for r in rows)},
                  tables={"many_to_one": (["functional", "depth", "tree_side", "spine_side", "difference"], rows)},
                  checks={"many_to_one": ok})


def exp_line_moments(m, cfg):
    p = cfg.parameters
    _check_params(p, ("line", "method", "tol", "samples", "second_moment"))
    line = spine.line_from_json(_param(p, "line", {"variant": "LevelCrossing", "level": 1}))
    method = _param(p, "method", "exactDP")
    law = models.spine_law(m)
    res = spine.line_first_moments(line, law, method=method, tol=_param(p, "tol", 1e-10, float),
                                   samples=_param(p, "samples", 100_000, int), seed=cfg.seed)
    summary = {"line": spine.line_to_json(line), **{k: v for k, v in res.as_dict().items() if k != "window"},
               "window": list(res.window)}
    if _param(p, "second_moment", False, bool):
        value, info = spine.line_second_moment(line, m)
        summary["second_moment_weight"] = value
        summary["second_moment_certified"] = bool(info["certified"])
    return Report(summary=summary)


def exp_renewal(m, cfg):
    p = cfg.parameters
    _check_params(p, ("n_max", "K"))
    law = models.spine_law(m)
    n_max = _param(p, "n_max", 200, int)
    K = [int(k) for k in _param(p, "K", [])]
    if abs(law.mean()) <= spine.DRIFT_TOL:
        stats = renewal.deep_excursion(law, range(1, n_max + 1))
        rows = [[n, q, n * q] for n, q in sorted(stats.qn_table.items())]
        summary = {"q": 1.0, "theta_ladder": stats.theta_ladder, "theta_fit": stats.theta_fit}
        return Report(summary=summary, tables={"excursion": (["n", "q_n", "n_q_n"], rows)},
                      plots={"n_q_n": (["n", "n_q_n"], [[r[0], r[2]] for r in rows])})
    stats = renewal.excursion_q(law, K_list=K)
    rows = [[k, v] for k, v in sorted(stats.q_K.items())]
    return Report(summary={"q": stats.q, "truncation_bound": stats.truncation_bound},
                  tables={"excursion": (["K", "q_K"], rows)})


def exp_tail_dp(m, cfg):
    p = cfg.parameters
    _check_params(p, ("L", "U", "k_max", "k_lo", "k_hi", "scale", "method", "rel_width"))
    tc = oracles.TailDpConfig(L=_param(p, "L", 40, int), U=_param(p, "U", 80, int),
                              k_max=_param(p, "k_max", 60, int), method=_param(p, "method", "newton"))
    res = oracles.nstar_tail_dp(m, tc)
    scale = _param(p, "scale", "linear")
    slope = oracles.tail_slope(res, _param(p, "k_lo", 20, int), _param(p, "k_hi", tc.k_max, int), scale)
    oracles.certify_slope(slope, _param(p, "rel_width", 0.1, float))
    summary = {"slope": slope.slope, "slope_lower": slope.slope_lower, "slope_upper": slope.slope_upper,
               "scale": scale, "k_range": list(slope.k_range), "boundary_policy": res.policy}
    law = models.spine_law(m)
    if scale == "linear" and abs(law.mean()) > spine.DRIFT_TOL:
        q = renewal.excursion_q(law).q
        summary["log_q"] = math.log(q)
    rows = [[int(k), lo, hi] for k, lo, hi in zip(res.k, res.lower, res.upper)]
    return Report(summary=summary, tables={"tail": (["k", "lower", "upper"], rows)},
                  plots={"log_tail": (["k", "log_lower", "log_upper"],
                                      [[k, math.log(lo) if lo > 0 else -math.inf, math.log(hi) if hi > 0 else -math.inf]
                                       for k, lo, hi in rows])})


def exp_scaling(m, cfg):
    p = cfg.parameters
    _check_params(p, ("depth", "levels", "binning", "max_population"))
    depth = _param(p, "depth", 20, int)
    levels = [int(n) for n in _param(p, "levels", [1, 2, 4, 8])]
    if min(levels, default=0) < 1:
        raise ConfigError("scaling levels must be positive")
    binning = _param(p, "binning", "latticeExact" if m.lattice else "unitInterval")
    controls = engine.GrowthControls(max_generation=depth,
                                     max_population=_param(p, "max_population", engine.DEFAULT_MAX_POPULATION, int))
    regime = models.classify_hypotheses(m).regime
    power = 2 if regime == "H2" else 1

    def one(seed):
        tree = engine.grow(m, controls, seed)
        return [ray_stats.sup_local_time(tree, n, binning) for n in levels]

    res = run_replicas(one, cfg.seed, cfg.replicas)
    rows, plot = [], []
    for j, n in enumerate(levels):
        vals = Replicas({i: float(r[j]) for i, r in enumerate(res)})
        for i, r in enumerate(res):
            rows.append([i, n, r[j]])
        norm = float(n) ** power
        plot.append([n, vals.mean(), norm, vals.mean() / norm])
    return Report(summary={"regime": regime, "normalizer_power": power},
                  tables={"sup_localtime": (["replica", "level", "sup_localtime"], rows)},
                  plots={"scaling": (["n", "sup_localtime", "n_normalizer", "ratio"], plot)})


def _mark_law(spec, tstar):
    kind = spec.get("kind", "pareto")
    if kind == "pareto":
        if "zeta" not in spec and "zeta_over_tstar" not in spec:
            raise ConfigError("a Pareto mark law needs zeta or zeta_over_tstar")
        zeta = spec["zeta"] if "zeta" in spec else spec["zeta_over_tstar"] * tstar
        return models.ParetoTail(float(zeta), float(spec.get("scale", 1.0)))
    if kind == "deterministic":
        return models.Deterministic(float(spec.get("value", 1.0)))
    if kind == "lognormal":
        return models.LogNormal(float(spec.get("mu", 0.0)), float(spec.get("sigma", 1.0)))
    raise ConfigError(f"unknown mark law {kind!r}")


def exp_discounted(m, cfg):
    p = cfg.parameters
    _check_params(p, ("depth", "marks", "max_population"))
    depth = _param(p, "depth", 20, int)
    tstar = models.find_tstar(m)
    specs = _param(p, "marks", [{"kind": "pareto", "zeta_over_tstar": 0.5}, {"kind": "pareto", "zeta_over_tstar": 2.0}])
    laws = [_mark_law(s, tstar) for s in specs]
    controls = engine.GrowthControls(max_generation=depth,
                                     max_population=_param(p, "max_population", engine.DEFAULT_MAX_POPULATION, int))
    res = run_replicas(lambda s: ray_stats.discounted_trace(m, laws, depth, s, controls), cfg.seed, cfg.replicas)
    rows, plot = [], []
    for i, tr in enumerate(res):
        for li in range(len(laws)):
            for g in range(depth + 1):
                rows.append([i, li, g, tr.peak[li, g], tr.X[li, g]])
    for li in range(len(laws)):
        for g in range(depth + 1):
            peak = Replicas({i: float(tr.peak[li, g]) for i, tr in enumerate(res)}).median()
            X = Replicas({i: float(tr.X[li, g]) for i, tr in enumerate(res)}).median()
            plot.append([li, g, peak, X])
    return Report(summary={"mark_laws": [repr(law) for law in laws], "tstar": tstar,
                           "truncated_replicas": sum(int(tr.truncated) for tr in res)},
                  tables={"discounted": (["replica", "law", "generation", "peak", "X"], rows)},
                  plots={"medians": (["law", "generation", "median_peak", "median_X"], plot)})


def exp_consistent_path(m, cfg):
    p = cfg.parameters
    _check_params(p, ("depths", "n0", "beam"))
    depths = [int(d) for d in _param(p, "depths", [50, 100])]
    n0 = _param(p, "n0", 20, int)
    controls = engine.GrowthControls(max_generation=max(depths), beam=_param(p, "beam", 2000, int))

    def one(seed):
        tree = engine.grow(m, controls, seed)
        out = []
        for d in depths:
            keep = tree.generation <= d
            sub = engine.BrwTree.from_arrays(tree.parent[keep], tree.position[keep], lattice=tree.lattice)
            out.append(ray_stats.consistent_path_stat(sub, n0))
        return out

    res = run_replicas(one, cfg.seed, cfg.replicas)
    rows = [[i, d, r[j]] for i, r in enumerate(res) for j, d in enumerate(depths)]
    plot = [[d, Replicas({i: r[j] for i, r in enumerate(res)}).median()] for j, d in enumerate(depths)]
    return Report(summary={"n0": n0, "medians": {str(d): v for d, v in plot}},
                  tables={"consistent_path": (["replica", "depth", "statistic"], rows)},
                  plots={"consistent_path": (["depth", "median_statistic"], plot)})


DRIVERS = {
    "tstar": exp_tstar,
    "classify": exp_classify,
    "grow-stats": exp_grow_stats,
    "many-to-one-check": exp_many_to_one,
    "line-moments": exp_line_moments,
    "renewal": exp_renewal,
    "tail-dp": exp_tail_dp,
    "scaling": exp_scaling,
    "discounted": exp_discounted,
    "consistent-path": exp_consistent_path,
}


def run_experiment(cfg):
    """Run one configured experiment and return its Report."""
    m = resolve_model(cfg.model)
    return DRIVERS[cfg.experiment](m, cfg)


# ---------------------------------------------------------------------------
# output


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return float(format(f, ".17g")) if math.isfinite(f) else str(f)
    return v


def csv_text(columns, rows, config_hash):
    buf = io.StringIO()
    buf.write(f"# config_hash={config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def emit_report(report, cfg, formats=("json", "csv", "plotdata")):
    """Write the report files into ``cfg.out`` and return their paths."""
    os.makedirs(cfg.out, exist_ok=True)
    if not os.access(cfg.out, os.W_OK):
        raise PermissionError(f"cannot write to {cfg.out}")
    h = cfg.hash
    paths = []
    if "json" in formats:
        doc = {"config_hash": h, "config": json.loads(cfg.canonical()), "experiment": cfg.experiment,
               "summary": _jsonable(report.summary), "checks": _jsonable(report.checks)}
        path = os.path.join(cfg.out, "summary.json")
        with open(path, "w") as fh:
            fh.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        paths.append(path)
    groups = []
    if "csv" in formats:
        groups.append((report.tables, ""))
    if "plotdata" in formats:
        groups.append((report.plots, ".plot"))
    for tables, suffix in groups:
        for name, (cols, rows) in sorted(tables.items()):
            path = os.path.join(cfg.out, f"{name}{suffix}.csv")
            with open(path, "w", newline="") as fh:
                fh.write(csv_text(cols, rows, h))
            paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# command line


def parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_parser():
    ap = argparse.ArgumentParser(prog="brwlab", description="Branching random walk experiments.")
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("model", nargs="?", help="bundled model name or model JSON file")
        sp.add_argument("--config", help="JSON experiment configuration")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--replicas", type=int)
        sp.add_argument("--out")
        sp.add_argument("--param", "-p", action="append", default=[], metavar="KEY=VALUE",
                        help="experiment parameter; VALUE is parsed as JSON when possible")
    return ap


def config_from_args(args):
    d = {}
    if args.config:
        with open(args.config) as fh:
            d = json.load(fh)
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        if d.get("experiment", args.experiment) != args.experiment:
            raise ConfigError("config experiment does not match the subcommand")
    d["experiment"] = args.experiment
    if args.model:
        d["model"] = args.model
    for key in ("seed", "replicas", "out"):
        if getattr(args, key) is not None:
            d[key] = getattr(args, key)
    params = dict(d.get("parameters", {}))
    for item in args.param:
        if "=" not in item:
            raise ConfigError(f"parameter {item!r} is not KEY=VALUE")
        k, v = item.split("=", 1)
        params[k] = parse_value(v)
    d["parameters"] = params
    return ExperimentConfig.from_dict(d)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        report = run_experiment(cfg)
    except (ConfigError, ModelError, UnsupportedError, json.JSONDecodeError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PrecisionError as exc:
        print(f"precision failure: {exc}", file=sys.stderr)
        return EXIT_PRECISION
    try:
        paths = emit_report(report, cfg)
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    for path in paths:
        print(path)
    failed = [k for k, ok in report.checks.items() if not ok]
    if failed:
        print(f"consistency check failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
