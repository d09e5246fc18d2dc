"""Experiment runner: JSON configs in, CSV tables + a run manifest out.

Commands::

    hwq validate|exact|simulate|couple|verify|sweep --config FILE --out DIR
        [--seed N] [--threads M]

The config is a single JSON document (schema documented in the README and
enforced here before any computation).  Every CSV row carries the
(r, a, policy, seed, method) provenance columns.  Given the same config and
seed the emitted CSVs are byte-identical across runs; the manifest echoes
everything needed to reproduce them.

Exit codes: 0 success, 1 configuration or precondition error, 2 numeric
non-convergence, 3 an invariant check failed (e.g. drift violations).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy
import scipy

from . import __version__
from .errors import (
    CycleTimeout,
    DegenerateState,
    EmptySource,
    HypothesisViolated,
    InvalidRate,
    NonUnitLoad,
    NotConverged,
    OrderingViolation,
    Reducible,
    SchemaError,
    ThetaOutOfRange,
    TruncationTooSmall,
    Unsupported,
)
from .model import ClassParams, SystemConfig, build_config, nominal_utilization
from .policy import KINDS
from .simulate import (
    RngStream,
    batch_means_multi,
    choose_estimator,
    default_warmup,
    regenerative_estimate,
)
from .coupling import run_infserver_coupled, run_monotone_coupled
from .exact import build_generator, enumerate_states, expectation, stationary
from .verify import (
    FunctionalSpec,
    default_truncation,
    drift_bounds_abandon_check,
    drift_identity_check,
    generator_identity_check,
    lyapunov_pointwise_check,
    sweep,
)

SCHEMA_VERSION = "hwq-config/1"
COMMANDS = ("validate", "exact", "simulate", "couple", "verify", "sweep")

_CONFIG_ERRORS = (
    SchemaError, NonUnitLoad, InvalidRate, HypothesisViolated, Unsupported,
    TruncationTooSmall, ThetaOutOfRange, DegenerateState, EmptySource,
)
_NUMERIC_ERRORS = (NotConverged, CycleTimeout, Reducible)


def _fail(path: str, message: str) -> SchemaError:
    return SchemaError(f"{path}: {message}")


def _require(obj, path, key, typ, default=None, required=False):
    if key not in obj:
        if required:
            raise _fail(f"{path}.{key}", "missing required field")
        return default
    val = obj[key]
    if typ is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, typ) or isinstance(val, bool) and typ is not bool:
        raise _fail(f"{path}.{key}", f"expected {typ.__name__}, got {type(val).__name__}")
    return val


def _parse_functionals(raw, path) -> list[FunctionalSpec]:
    if not isinstance(raw, list) or not raw:
        raise _fail(path, "expected a non-empty list of functional objects")
    specs = []
    for i, item in enumerate(raw):
        here = f"{path}[{i}]"
        if not isinstance(item, dict):
            raise _fail(here, "expected an object")
        fid = _require(item, here, "id", str, required=True)
        try:
            spec = FunctionalSpec(
                fid=fid,
                theta=_require(item, here, "theta", float),
                k=_require(item, here, "k", float),
                x=_require(item, here, "x", float),
            )
        except ValueError as exc:
            raise _fail(here, str(exc)) from None
        specs.append(spec)
    return specs


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict
    seed: int
    policy: str
    a: float
    r_values: tuple[float, ...]
    systems: tuple[SystemConfig, ...]
    sections: dict

    def system(self) -> SystemConfig:
        return self.systems[0]


def parse_config(source) -> ExperimentConfig:
    """Parse and validate a config from a path, JSON text, or dict."""
    if isinstance(source, dict):
        raw = source
    else:
        text = str(source)
        p = Path(text)
        if p.exists():
            text = p.read_text()
        elif "{" not in text:  # looks like a path, not inline JSON
            raise SchemaError(f"config file not found: {source}")
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise SchemaError("config root must be a JSON object")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise _fail("schema_version", f"expected {SCHEMA_VERSION!r}, got {version!r}")

    system = _require(raw, "", "system", dict, required=True)
    classes_raw = _require(system, "system", "classes", list, required=True)
    classes = []
    for i, c in enumerate(classes_raw):
        here = f"system.classes[{i}]"
        if not isinstance(c, dict):
            raise _fail(here, "expected an object")
        classes.append(ClassParams(
            lam=_require(c, here, "lambda", float, required=True),
            mu=_require(c, here, "mu", float, required=True),
            nu=_require(c, here, "nu", float, default=0.0),
        ))
    a = _require(system, "system", "a", float, required=True)
    if "r_list" in system:
        r_values = tuple(float(v) for v in _require(system, "system", "r_list", list))
        if not r_values:
            raise _fail("system.r_list", "must be non-empty")
    elif "r" in system:
        r_values = (_require(system, "system", "r", float),)
    else:
        raise _fail("system", "needs either 'r' or 'r_list'")

    policy = _require(raw, "", "policy", str, required=True)
    if policy not in KINDS:
        raise _fail("policy", f"unknown policy {policy!r}; valid kinds: {list(KINDS)}")
    seed = _require(raw, "", "seed", int, default=0)

    sections = {}
    for cmd in COMMANDS:
        if cmd == "validate":
            continue
        sec = raw.get(cmd, {})
        if not isinstance(sec, dict):
            raise _fail(cmd, "expected an object")
        sections[cmd] = sec
        if "functionals" in sec:
            sections[cmd] = dict(sec)
            sections[cmd]["functionals"] = _parse_functionals(
                sec["functionals"], f"{cmd}.functionals"
            )
    if "couple" in raw:
        kind = raw["couple"].get("coupling", "infserver")
        if kind not in ("infserver", "monotone"):
            raise _fail("couple.coupling", f"expected 'infserver' or 'monotone', got {kind!r}")

    systems = tuple(build_config(classes, r, a) for r in r_values)
    return ExperimentConfig(
        raw=raw, seed=seed, policy=policy, a=a,
        r_values=r_values, systems=systems, sections=sections,
    )


def emit(cfg: ExperimentConfig) -> str:
    """Canonical JSON text; parse(emit(cfg)) reproduces cfg."""
    return json.dumps(cfg.raw, indent=2, sort_keys=True)


@dataclass(frozen=True)
class ReportBundle:
    csv_paths: tuple[str, ...]
    manifest_path: str
    violations: int


PROVENANCE = ("r", "a", "policy", "seed", "method")


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow(["" if v is None else v for v in row])


def _spec_functionals(section, default_specs):
    return section.get("functionals", default_specs)


def _cmd_validate(cfg, out_dir, threads):
    rows = []
    for sc in cfg.systems:
        rows.append([sc.r, sc.a, cfg.policy, cfg.seed, "validate",
                     sc.n_servers, nominal_utilization(sc), sum(sc.rho), sc.a_eff])
    path = out_dir / "validate.csv"
    _write_csv(path, PROVENANCE + ("n_servers", "utilization", "load", "a_eff"), rows)
    return [path], 0


def _cmd_exact(cfg, out_dir, threads):
    sec = cfg.sections["exact"]
    specs = _spec_functionals(sec, [FunctionalSpec("z_total")])
    rows = []
    for sc in cfg.systems:
        K = sec.get("K") or default_truncation(sc)
        gen = build_generator(enumerate_states(sc, cfg.policy, K))
        sv = stationary(gen, method=sec.get("method", "auto"))
        for spec in specs:
            vals = spec.vector(sc)(gen.idx.z, gen.idx.psi, sc)
            rows.append([sc.r, sc.a, cfg.policy, cfg.seed, sv.method,
                         spec.label(), spec.theta, spec.k, spec.x,
                         expectation(sv.pi, vals), sv.residual, sv.deficit_estimate])
    path = out_dir / "exact.csv"
    _write_csv(path, PROVENANCE + ("functional", "theta", "k", "x",
                                   "estimate", "solver_residual", "deficit"), rows)
    return [path], 0


def _cmd_simulate(cfg, out_dir, threads):
    sec = cfg.sections["simulate"]
    sc = cfg.system()
    specs = _spec_functionals(sec, [FunctionalSpec("z_total")])
    method = sec.get("estimator", "auto")
    if method == "auto":
        method = choose_estimator(sc)
    warmup = sec.get("warmup_events")
    warmup = default_warmup(sc) if warmup is None else warmup
    rows = []
    if method == "regenerative":
        for spec in specs:
            est = regenerative_estimate(
                sc, cfg.policy, spec.scalar(sc), sec.get("n_cycles", 1000),
                RngStream(cfg.seed, 0),
                max_events_per_cycle=sec.get("max_events_per_cycle", 1_000_000),
            )
            rows.append([sc.r, sc.a, cfg.policy, cfg.seed, est.method, spec.label(),
                         est.value, est.half_width, est.cycles_or_batches,
                         est.warmup_events])
    else:
        fns = {spec.label(): spec.scalar(sc) for spec in specs}
        ests = batch_means_multi(
            sc, cfg.policy, fns, sec.get("n_batches", 20),
            sec.get("events_per_batch", 50_000), warmup, RngStream(cfg.seed, 0),
        )
        for spec in specs:
            est = ests[spec.label()]
            rows.append([sc.r, sc.a, cfg.policy, cfg.seed, est.method, spec.label(),
                         est.value, est.half_width, est.cycles_or_batches,
                         est.warmup_events])
    path = out_dir / "simulate.csv"
    _write_csv(path, PROVENANCE + ("functional", "estimate", "half_width",
                                   "cycles_or_batches", "warmup_events"), rows)
    return [path], 0


def _cmd_couple(cfg, out_dir, threads):
    sec = cfg.sections["couple"]
    sc = cfg.system()
    coupling = sec.get("coupling", "infserver")
    n_events = sec.get("n_events", 100_000)
    n_seeds = sec.get("n_seeds", 1)
    warmup = sec.get("warmup_events", 0)
    nc = sc.n_classes

    def one(stream):
        rng = RngStream(cfg.seed, stream)
        if coupling == "infserver":
            rep = run_infserver_coupled(sc, cfg.policy, n_events, rng,
                                        warmup_events=warmup)
            return (stream, rep.ordering_checks, rep.violations,
                    rep.z_time_avg, rep.g_time_avg)
        rep = run_monotone_coupled(sc, sec.get("nu_prime", list(sc.nus)),
                                   cfg.policy, n_events, rng, warmup_events=warmup)
        return (stream, rep.ordering_checks, rep.violations,
                rep.z_time_avg, rep.z_prime_time_avg)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(n_seeds)))
    else:
        results = [one(s) for s in range(n_seeds)]
    results.sort(key=lambda t: t[0])  # order-independent merge

    other = "g_avg" if coupling == "infserver" else "zprime_avg"
    columns = PROVENANCE + ("stream", "events", "ordering_checks", "violations") \
        + tuple(f"z_avg_{i}" for i in range(nc)) + tuple(f"{other}_{i}" for i in range(nc))
    rows = []
    violations = 0
    for stream, checks, viol, z_avg, other_avg in results:
        violations += viol
        rows.append([sc.r, sc.a, cfg.policy, cfg.seed, coupling, stream,
                     n_events, checks, viol, *z_avg, *other_avg])
    path = out_dir / "couple.csv"
    _write_csv(path, columns, rows)
    return [path], violations


def _cmd_verify(cfg, out_dir, threads):
    sec = cfg.sections["verify"]
    sc = cfg.system()
    checks = sec.get("checks", ["drift_identity"])
    K = sec.get("K") or default_truncation(sc)
    theta_list = sec.get("theta_list", [0.05, 0.1, 0.2, 0.5])
    k = sec.get("k", 5.0)
    gen = build_generator(enumerate_states(sc, cfg.policy, K))
    rows = []
    violations = 0
    for check in checks:
        if check == "drift_identity":
            rep = drift_identity_check(sc, cfg.policy, gen=gen)
            violations += rep.violations
            rows.append([sc.r, sc.a, cfg.policy, cfg.seed, check, "phi_hat",
                         rep.n_states, rep.violations, rep.max_rel_err, None])
        elif check == "lyapunov":
            for theta in theta_list:
                rep = lyapunov_pointwise_check(sc, cfg.policy, theta, gen=gen)
                violations += rep.violations
                rows.append([sc.r, sc.a, cfg.policy, cfg.seed, check, rep.label,
                             rep.n_states, rep.violations, None, rep.worst_slack])
        elif check == "abandon_bounds":
            rep = drift_bounds_abandon_check(sc, cfg.policy, gen=gen)
            violations += rep.violations
            for side in (rep.upper, rep.lower):
                rows.append([sc.r, sc.a, cfg.policy, cfg.seed, check, side.label,
                             side.n_states, side.violations, None, side.worst_slack])
        elif check == "generator_identity":
            theta = sec.get("theta", 0.2)
            rep = generator_identity_check(sc, cfg.policy, theta=theta, k=k, gen=gen)
            for row in rep.rows:
                if not row.ok:
                    violations += 1
                rows.append([sc.r, sc.a, cfg.policy, cfg.seed, check, row.functional,
                             gen.idx.n_states, int(not row.ok), row.residual,
                             row.bound])
        else:
            raise SchemaError(f"verify.checks: unknown check {check!r}")
    path = out_dir / "verify.csv"
    _write_csv(path, PROVENANCE + ("label", "n_states", "violations",
                                   "residual_or_err", "bound_or_slack"), rows)
    return [path], violations


def _cmd_sweep(cfg, out_dir, threads):
    sec = cfg.sections["sweep"]
    specs = _spec_functionals(
        sec, [FunctionalSpec("exp_sum_zhat_plus", theta=0.1),
              FunctionalSpec("exp_sum_zhat_minus", theta=0.1)]
    )
    classes = cfg.system().classes
    rows = sweep(
        classes, cfg.a, cfg.r_values, cfg.policy, specs, cfg.seed,
        estimator=sec.get("estimator", "auto"),
        K=sec.get("K"),
        n_batches=sec.get("n_batches", 20),
        events_per_batch=sec.get("events_per_batch", 50_000),
        warmup_events=sec.get("warmup_events"),
    )
    out_rows = [[row.r, cfg.a, cfg.policy, cfg.seed, row.method, row.functional,
                 row.theta, row.estimate, row.half_width] for row in rows]
    path = out_dir / "sweep.csv"
    _write_csv(path, PROVENANCE + ("functional", "theta", "estimate", "half_width"),
               out_rows)
    paths = [path]
    svg = _plot_sweep(rows, out_dir)
    if svg is not None:
        paths.append(svg)
    return paths, 0


def _plot_sweep(rows, out_dir):
    """Log-log estimate-vs-r plot; skipped when matplotlib is unavailable."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return None
    by_fn = {}
    for row in rows:
        by_fn.setdefault(row.functional, []).append(row)
    fig, ax = plt.subplots(figsize=(6, 4))
    for fn, pts in sorted(by_fn.items()):
        pts.sort(key=lambda p: p.r)
        rs = [p.r for p in pts]
        es = [p.estimate for p in pts]
        errs = [p.half_width for p in pts]
        ax.errorbar(rs, es, yerr=errs, marker="o", label=fn)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("r")
    ax.set_ylabel("estimate")
    ax.legend(fontsize=7)
    path = out_dir / "sweep.svg"
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)
    return path


_DISPATCH = {
    "validate": _cmd_validate,
    "exact": _cmd_exact,
    "simulate": _cmd_simulate,
    "couple": _cmd_couple,
    "verify": _cmd_verify,
    "sweep": _cmd_sweep,
}


def dispatch(command: str, cfg: ExperimentConfig, out_dir, threads: int = 1) -> ReportBundle:
    """Run one command; write its CSVs and the run manifest."""
    if command not in _DISPATCH:
        raise SchemaError(f"unknown command {command!r}; valid: {COMMANDS}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    paths, violations = _DISPATCH[command](cfg, out_dir, threads)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "command": command,
        "seed": cfg.seed,
        "threads": threads,
        "config": cfg.raw,
        "outputs": [p.name for p in paths],
        "violations": violations,
        "versions": {
            "python": platform.python_version(),
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
        },
        "wall_time_s": round(time.perf_counter() - started, 3),
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return ReportBundle(
        csv_paths=tuple(str(p) for p in paths),
        manifest_path=str(manifest_path),
        violations=violations,
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hwq",
        description="Halfin-Whitt multiclass queue experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        p = sub.add_parser(cmd)
        p.add_argument("--config", required=True, help="path to a JSON config")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--threads", type=int, default=None,
                       help="replication fan-out (HWQ_THREADS as fallback)")
    args = parser.parse_args(argv)

    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("HWQ_THREADS", "1"))
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            raw = dict(cfg.raw)
            raw["seed"] = args.seed
            cfg = parse_config(raw)
        bundle = dispatch(args.command, cfg, args.out, threads=threads)
    except _CONFIG_ERRORS as exc:
        print(f"hwq: config error: {exc}", file=sys.stderr)
        return 1
    except _NUMERIC_ERRORS as exc:
        print(f"hwq: numeric failure: {exc}", file=sys.stderr)
        return 2
    except OrderingViolation as exc:
        print(f"hwq: invariant violation: {exc}", file=sys.stderr)
        return 3
    if bundle.violations > 0:
        print(f"hwq: {bundle.violations} invariant violation(s); see reports",
              file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
