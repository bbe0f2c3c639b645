"""Command-line entry point: batch searches, PopDB, predictor benchmarks,
analytics export, and space inspection.

Exit codes: 0 success, 2 configuration error, 3 evaluator error, 4 internal
error. The fully resolved configuration is persisted with every run so a run
directory can be reproduced exactly via --config.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from .driver import (
    ConcurrentNasConfig,
    PredictorConfig,
    SearchReport,
    concurrent_search,
    fit_objective_predictor,
    full_search,
    hypervolume_trace,
)
from .errors import (
    ConfigError,
    EvaluationFailed,
    EvaluationTimeout,
    ProtocolError,
    SubnetSearchError,
)
from .evalmgr import (
    ExternalEvaluator,
    ResultStore,
    SyntheticSurfaceEvaluator,
    TableEvaluator,
    evaluate_batch,
    make_surface,
)
from .evolver import EvolverConfig
from .objectives import (
    LatencyNormalizer,
    ObjectiveSpec,
    default_reference,
    normalize_latency,
    pareto_front,
)
from .popdb import (
    build_constraints,
    constrain_space,
    elastic_frequencies,
    hdbscan,
    history_features,
    load_constraints,
    save_constraints,
)
from .predict import run_prediction_trials
from .space import (
    Genotype,
    cardinality,
    encode_matrix,
    genotype_id,
    resolve_space,
    sample_uniform,
    space_from_dict,
    space_to_dict,
)
from .util import subseed

OUTPUT_DIR_ENV = "SUBNETSEARCH_OUTPUT_DIR"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EVALUATOR = 3
EXIT_INTERNAL = 4


# ---------------------------------------------------------------------------
# Shared option parsing
# ---------------------------------------------------------------------------


def _parse_objective(text: str) -> ObjectiveSpec:
    parts = text.split(":")
    if len(parts) < 2:
        raise ConfigError(
            f"--objective {text!r}: expected name:direction[:unit]"
        )
    name, direction = parts[0], parts[1]
    direction = {"max": "maximize", "min": "minimize"}.get(direction, direction)
    unit = parts[2] if len(parts) > 2 else ""
    return ObjectiveSpec(name, direction, unit)


def _build_evaluator(args, space, declared_specs):
    """Returns (evaluator, objective specs) from an evaluator spec string like
    synthetic:clx-like, table:<path>, or external:<command>."""
    spec_str = args.evaluator
    kind, _, rest = spec_str.partition(":")
    if kind == "synthetic":
        surface = make_surface(
            space,
            rest or "clx-like",
            noise_scale=getattr(args, "noise_scale", 0.0),
            noise_seed=getattr(args, "noise_seed", 0),
        )
        return SyntheticSurfaceEvaluator(surface), surface.specs
    if kind == "table":
        if not rest:
            raise ConfigError("table evaluator needs a file path: table:<path>")
        if not Path(rest).exists():
            raise ConfigError(f"table file not found: {rest}")
        ev = TableEvaluator(rest)
        return ev, ev.specs
    if kind == "external":
        if not rest:
            raise ConfigError("external evaluator needs a command: external:<cmd>")
        if not declared_specs:
            raise ConfigError(
                "external evaluators need --objective name:direction declarations"
            )
        ev = ExternalEvaluator(
            rest,
            declared_specs,
            space_name=space.name,
            timeout=getattr(args, "timeout", 600.0),
        )
        return ev, tuple(declared_specs)
    raise ConfigError(
        f"unknown evaluator {spec_str!r}; use synthetic:<preset>, table:<path> "
        "or external:<command>"
    )


def _resolve_out_dir(args, tactic: str) -> Path:
    if args.out:
        return Path(args.out)
    env = os.environ.get(OUTPUT_DIR_ENV)
    base = Path(env) if env else Path("runs")
    stamp = time.strftime("%Y%m%d-%H%M%S")
    return base / f"{tactic}-seed{args.seed}-{stamp}"


def _load_config_defaults(args) -> dict:
    if not getattr(args, "config", None):
        return {}
    path = Path(args.config)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}")


def _space_from_args(args, cfg: dict):
    if cfg.get("space_doc"):
        return space_from_dict(cfg["space_doc"])
    label = args.space or cfg.get("space")
    if not label:
        raise ConfigError("missing --space (preset name or space file)")
    return resolve_space(label)


def _warm_start_from(path: str, declared=None) -> list[Genotype]:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"warm-start file not found: {p}")
    store = ResultStore.load(p)
    recs = store.validation_records()
    if not recs:
        raise ConfigError(f"warm-start log {p} has no validation records")
    return [r.genotype for r in pareto_front(recs)]


def _predictor_config(args, cfg: dict) -> PredictorConfig:
    pc = cfg.get("predictor", {})
    families = dict(pc.get("families", {}))
    for item in getattr(args, "predictor_for", None) or []:
        name, _, fam = item.partition(":")
        if not fam:
            raise ConfigError(f"--predictor-for {item!r}: expected objective:family")
        families[name] = fam
    return PredictorConfig(
        family=args.predictor or pc.get("family", "ridge"),
        encoding=getattr(args, "encoding", None) or pc.get("encoding", "one_hot"),
        ridge_lambda=args.ridge_lambda
        if args.ridge_lambda is not None
        else pc.get("ridge_lambda", 1.0),
        svr_c=pc.get("svr_c", 1.0),
        svr_epsilon=pc.get("svr_epsilon", 0.01),
        svr_kernel=pc.get("svr_kernel", "rbf"),
        svr_gamma=pc.get("svr_gamma"),
        families=families,
    )


def _print_summary(report: SearchReport, outdir: Path, elapsed: float) -> None:
    hv = report.final_hypervolume()
    print(f"tactic:           {report.tactic}")
    print(f"validations:      {report.validation_count}")
    print(f"front size:       {len(report.validated_front)}")
    print(f"final hypervolume: {hv if hv is not None else 'n/a (not 2-D)'}")
    print(f"elapsed:          {elapsed:.2f} s")
    print(f"artifacts:        {outdir}")
    for w in report.warnings[:5]:
        print(f"warning: {w}")


# ---------------------------------------------------------------------------
# search
# ---------------------------------------------------------------------------


def _cmd_search_full(args) -> int:
    cfg = _load_config_defaults(args)
    if cfg and cfg.get("tactic") not in (None, "full"):
        raise ConfigError(f"--config has tactic {cfg.get('tactic')!r}, not 'full'")
    space = _space_from_args(args, cfg)
    declared = tuple(_parse_objective(o) for o in args.objective or [])
    args.seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    args.evaluator = args.evaluator or cfg.get("evaluator")
    if not args.evaluator:
        raise ConfigError("missing --evaluator")
    evaluator, specs = _build_evaluator(args, space, declared)
    warm = None
    if args.warm_start:
        warm = _warm_start_from(args.warm_start)
    elif cfg.get("warm_start"):
        warm = [Genotype(tuple(g)) for g in cfg["warm_start"]]
    evolver_cfg = EvolverConfig(
        population_size=args.pop or cfg.get("population_size", 50),
        generations=args.gens if args.gens is not None else cfg.get("generations", 200),
        crossover_rate=cfg.get("crossover_rate", 0.9),
        mutation_rate=cfg.get("mutation_rate"),
        seed=args.seed,
    )
    predictor_cfg = _predictor_config(args, cfg)
    outdir = _resolve_out_dir(args, "full")
    extra = {
        "space": args.space or cfg.get("space", space.name),
        "space_doc": space_to_dict(space),
        "evaluator": args.evaluator,
        "noise_scale": getattr(args, "noise_scale", 0.0),
        "noise_seed": getattr(args, "noise_seed", 0),
    }
    t0 = time.perf_counter()
    report = full_search(
        space,
        specs,
        evaluator,
        predictor_cfg,
        evolver_cfg,
        n_train=args.train if args.train is not None else cfg.get("n_train", 500),
        warm_start=warm,
        config_extra=extra,
    )
    report.export(outdir)
    _print_summary(report, outdir, time.perf_counter() - t0)
    return EXIT_OK


def _cmd_search_concurrent(args) -> int:
    cfg = _load_config_defaults(args)
    if cfg and cfg.get("tactic") not in (None, "concurrent"):
        raise ConfigError(
            f"--config has tactic {cfg.get('tactic')!r}, not 'concurrent'"
        )
    space = _space_from_args(args, cfg)
    declared = tuple(_parse_objective(o) for o in args.objective or [])
    args.seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    args.evaluator = args.evaluator or cfg.get("evaluator")
    if not args.evaluator:
        raise ConfigError("missing --evaluator")
    evaluator, specs = _build_evaluator(args, space, declared)
    warm = None
    if args.warm_start:
        warm = tuple(_warm_start_from(args.warm_start))
    elif cfg.get("warm_start"):
        warm = tuple(Genotype(tuple(g)) for g in cfg["warm_start"])
    nas_cfg = ConcurrentNasConfig(
        population_size=args.pop or cfg.get("population_size", 50),
        iterations=args.iters or cfg.get("iterations", 3),
        inner_generations=args.inner_gens
        if args.inner_gens is not None
        else cfg.get("inner_generations", 250),
        predictor=_predictor_config(args, cfg),
        validation_only_objectives=tuple(
            args.validation_only or cfg.get("validation_only_objectives", [])
        ),
        warm_start=warm,
        seed=args.seed,
        inner_population=cfg.get("inner_population"),
        crossover_rate=cfg.get("crossover_rate", 0.9),
        mutation_rate=cfg.get("mutation_rate"),
    )
    outdir = _resolve_out_dir(args, "concurrent")
    extra = {
        "space": args.space or cfg.get("space", space.name),
        "space_doc": space_to_dict(space),
        "evaluator": args.evaluator,
        "noise_scale": getattr(args, "noise_scale", 0.0),
        "noise_seed": getattr(args, "noise_seed", 0),
    }
    t0 = time.perf_counter()
    report = concurrent_search(space, specs, evaluator, nas_cfg, config_extra=extra)
    report.export(outdir)
    _print_summary(report, outdir, time.perf_counter() - t0)
    return EXIT_OK


# ---------------------------------------------------------------------------
# popdb
# ---------------------------------------------------------------------------


def _cmd_popdb(args) -> int:
    history_path = Path(args.history)
    if not history_path.exists():
        raise ConfigError(f"history file not found: {history_path}")
    space = resolve_space(args.space)
    store = ResultStore.load(history_path, space=space)
    recs = store.validation_records()
    if not recs:
        raise ConfigError(f"{history_path}: no validation records to cluster")
    genotypes = [r.genotype for r in recs]
    vectors = [r.objectives_raw for r in recs] if args.include_objectives else None
    feats, idx = history_features(
        genotypes,
        space,
        objective_vectors=vectors,
        max_points=args.max_points,
        seed=args.seed,
    )
    labeling = hdbscan(feats, args.min_cluster_size, args.min_samples)
    kept = [genotypes[int(i)] for i in idx]
    freqs = elastic_frequencies(labeling, kept, space)
    constraints = build_constraints(
        freqs, args.threshold, space, source_run_id=str(history_path)
    )
    out = Path(args.out) if args.out else history_path.parent / "constraints.json"
    save_constraints(constraints, space, out)
    reduced = constrain_space(space, constraints)
    print(f"points clustered: {len(kept)}")
    print(f"clusters found:   {labeling.n_clusters}")
    noise = sum(1 for l in labeling.labels if l < 0)
    print(f"noise points:     {noise} ({noise / len(kept):.1%})")
    print(f"|original space|: {cardinality(space):.4e}")
    print(f"|reduced space|:  {cardinality(reduced):.4e}")
    print(f"constraints:      {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# predict bench
# ---------------------------------------------------------------------------


def _parse_sizes(text: str) -> list[int]:
    if ":" in text:
        parts = [int(p) for p in text.split(":")]
        if len(parts) != 3:
            raise ConfigError(f"--train-sizes {text!r}: expected lo:hi:step")
        lo, hi, step = parts
        return list(range(lo, hi + 1, step))
    return [int(p) for p in text.split(",")]


def _cmd_predict_bench(args) -> int:
    space = resolve_space(args.space)
    declared = tuple(_parse_objective(o) for o in args.objective_spec or [])
    evaluator, specs = _build_evaluator(args, space, declared)
    if args.objective not in {s.name for s in specs}:
        raise ConfigError(
            f"objective {args.objective!r} not provided by evaluator "
            f"({[s.name for s in specs]})"
        )
    sizes = _parse_sizes(args.train_sizes)
    needed = args.test_size + max(sizes)
    pool: list[Genotype] = []
    keys = set()
    attempt = 0
    while len(pool) < needed and attempt < 50:
        for g in sample_uniform(
            space, needed, subseed(args.seed, "bench-pool", attempt)
        ):
            if g.genes not in keys:
                keys.add(g.genes)
                pool.append(g)
        attempt += 1
    if len(pool) < needed:
        raise ConfigError(
            f"space too small for bench: need {needed} distinct genotypes"
        )
    pool = pool[:needed]
    store = ResultStore(specs, space=space)
    recs = evaluate_batch(pool, evaluator, store)
    bad = [r for r in recs if not r.ok]
    if bad:
        raise EvaluationFailed(f"{len(bad)} bench evaluations failed: {bad[0].error}")
    pcfg = _predictor_config(args, {})
    X = encode_matrix(pool, space, pcfg.encoding)
    y = np.array([r.objectives_raw.value_of(args.objective) for r in recs])
    results = run_prediction_trials(
        X,
        y,
        lambda Xt, yt: fit_objective_predictor(pcfg, Xt, yt, args.objective),
        sizes,
        test_size=args.test_size,
        trials=args.trials,
        seed=args.seed,
    )
    rows = {}
    for r in results:
        rows.setdefault(r.train_size, []).append(r)
    print("train_size  mape_mean  mape_std  tau_mean")
    out_rows = []
    for size in sorted(rows):
        mapes = [r.mape for r in rows[size]]
        taus = [r.kendall for r in rows[size]]
        mape_mean = statistics.fmean(mapes)
        mape_std = statistics.pstdev(mapes) if len(mapes) > 1 else 0.0
        tau_mean = statistics.fmean(taus)
        print(f"{size:10d}  {mape_mean:9.4f}  {mape_std:8.4f}  {tau_mean:8.4f}")
        out_rows.append([size, mape_mean, mape_std, tau_mean])
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["train_size", "mape_mean", "mape_std", "tau_mean"])
            writer.writerows(out_rows)
        print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def _require_artifact(run_dir: Path, name: str) -> Path:
    path = run_dir / name
    if not path.exists():
        raise ConfigError(f"missing artifact file: {path}")
    return path


def _cmd_analyze(args) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise ConfigError(f"not a report directory: {run_dir}")
    config_path = _require_artifact(run_dir, "config.json")
    evals_path = _require_artifact(run_dir, "evals.jsonl")
    with open(config_path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    store = ResultStore.load(evals_path)
    recs = store.validation_records()
    if not recs:
        raise ConfigError(f"{evals_path}: no validation records")
    outdir = Path(args.out) if args.out else run_dir / "analysis"
    outdir.mkdir(parents=True, exist_ok=True)

    front = pareto_front(recs)
    specs = store.specs
    latency_specs = [s for s in specs if "latency" in s.name.lower()]
    normalizers = {}
    for s in latency_specs:
        col = [r.objectives_raw.value_of(s.name) for r in recs]
        normalizers[s.name] = LatencyNormalizer(l_min=min(col), l_max=max(col))
    with open(outdir / "normalized_front.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["genotype_id"] + [f"{s.name}_raw" for s in specs] + [
            f"{s.name}_normalized" for s in latency_specs
        ]
        writer.writerow(header)
        for rec in front:
            row = [genotype_id(rec.genotype)]
            row += [repr(v) for v in rec.objectives_raw.values]
            for s in latency_specs:
                row.append(
                    repr(
                        normalize_latency(
                            rec.objectives_raw.value_of(s.name), normalizers[s.name]
                        )
                    )
                )
            writer.writerow(row)

    if len(specs) == 2:
        reference = cfg.get("hv_reference")
        if reference is None:
            first_gen = min(r.gen if r.gen is not None else 0 for r in recs)
            reference = default_reference(
                [
                    r.objectives_raw
                    for r in recs
                    if (r.gen if r.gen is not None else 0) == first_gen
                ]
            )
        trace = hypervolume_trace(store, tuple(reference))
        with open(outdir / "hv_vs_evals.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["evaluation_count", "hypervolume"])
            for count, hv in trace:
                writer.writerow([count, repr(hv)])

    pop_dir = outdir / "populations"
    pop_dir.mkdir(exist_ok=True)
    by_gen: dict[int, list] = {}
    for r in recs:
        by_gen.setdefault(r.gen if r.gen is not None else 0, []).append(r)
    for gen, rows in sorted(by_gen.items()):
        with open(pop_dir / f"gen_{gen:04d}.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["genotype_id"] + [s.name for s in specs] + ["genes"])
            for r in rows:
                writer.writerow(
                    [genotype_id(r.genotype)]
                    + [repr(v) for v in r.objectives_raw.values]
                    + [" ".join(str(g) for g in r.genotype.genes)]
                )

    lines = [
        f"run: {run_dir}",
        f"tactic: {cfg.get('tactic', 'unknown')}",
        f"validation records: {len(recs)}",
        f"front size: {len(front)}",
    ]
    for s in specs:
        col = [r.objectives_raw.value_of(s.name) for r in recs]
        lines.append(
            f"{s.name}: min={min(col):.6g} mean={statistics.fmean(col):.6g} "
            f"max={max(col):.6g} ({s.direction})"
        )
    if len(specs) == 2:
        lines.append(f"final hypervolume: {trace[-1][1]:.6g}")
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    print(f"analysis written to {outdir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# space info
# ---------------------------------------------------------------------------


def _cmd_space_info(args) -> int:
    space = resolve_space(args.space)
    if args.constraints:
        constraints = load_constraints(args.constraints)
        space = constrain_space(space, constraints)
    size = cardinality(space)
    print(f"space:         {space.name}")
    print(f"genome length: {space.genome_length}")
    print(f"cardinality:   {size:.4e} ({size})")
    print(f"blocks:        {len(space.blocks)}")
    print("layout:")
    pos = 0
    for p in space.params:
        span = (
            f"[{pos}]" if p.position_count == 1 else f"[{pos}..{pos + p.position_count - 1}]"
        )
        print(f"  {span:>10} {p.name:<28} {p.role:<12} values={list(p.allowed_values)}")
        pos += p.position_count
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subnetsearch",
        description="Pareto search over sub-network configurations of super-networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_options(p, concurrent: bool):
        p.add_argument("--space", help="space preset name or JSON file")
        p.add_argument("--evaluator", help="synthetic:<preset> | table:<path> | external:<cmd>")
        p.add_argument("--objective", action="append",
                       help="name:direction[:unit]; needed for external evaluators")
        p.add_argument("--pop", type=int, help="population size")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", help=f"artifacts directory (or ${OUTPUT_DIR_ENV})")
        p.add_argument("--config", help="load defaults from a persisted config.json")
        p.add_argument("--warm-start", help="evals.jsonl whose front seeds the search")
        p.add_argument("--predictor", choices=["ridge", "svr", "none"], default=None)
        p.add_argument("--predictor-for", action="append",
                       help="objective:family per-objective override")
        p.add_argument("--encoding", choices=["one_hot", "ordinal_normalized"],
                       default=None, help="predictor feature encoding")
        p.add_argument("--ridge-lambda", type=float, default=None)
        p.add_argument("--noise-scale", type=float, default=0.0)
        p.add_argument("--noise-seed", type=int, default=0)
        p.add_argument("--timeout", type=float, default=600.0,
                       help="external evaluator response timeout (s)")
        p.add_argument("--jobs", type=int, default=1, help="evaluation fan-out cap")
        if concurrent:
            p.add_argument("--iters", type=int, help="ConcurrentNAS iterations")
            p.add_argument("--inner-gens", type=int, default=None,
                           help="inner search generations per iteration")
            p.add_argument("--validation-only", action="append",
                           help="objective measured, never predicted")
        else:
            p.add_argument("--gens", type=int, default=None, help="generations")
            p.add_argument("--train", type=int, default=None,
                           help="predictor training sample size")

    search = sub.add_parser("search", help="run a search tactic")
    search_sub = search.add_subparsers(dest="tactic", required=True)
    p_full = search_sub.add_parser("full", help="predictors up front, then search")
    add_run_options(p_full, concurrent=False)
    p_full.set_defaults(func=_cmd_search_full)
    p_conc = search_sub.add_parser("concurrent", help="iterative predictor-in-the-loop search")
    add_run_options(p_conc, concurrent=True)
    p_conc.set_defaults(func=_cmd_search_concurrent)

    p_popdb = sub.add_parser("popdb", help="build constraints from search history")
    p_popdb.add_argument("--history", required=True, help="evals.jsonl of a prior run")
    p_popdb.add_argument("--space", required=True)
    p_popdb.add_argument("--threshold", type=float, default=0.01)
    p_popdb.add_argument("--min-cluster-size", type=int, default=50)
    p_popdb.add_argument("--min-samples", type=int, default=10)
    p_popdb.add_argument("--max-points", type=int, default=20000)
    p_popdb.add_argument("--include-objectives", action="store_true",
                         help="cluster in joint genotype+objective space")
    p_popdb.add_argument("--seed", type=int, default=0)
    p_popdb.add_argument("--out", help="constraints output path")
    p_popdb.set_defaults(func=_cmd_popdb)

    predict_p = sub.add_parser("predict", help="predictor tools")
    predict_sub = predict_p.add_subparsers(dest="predict_cmd", required=True)
    p_bench = predict_sub.add_parser("bench", help="train-size sweep with repeated trials")
    p_bench.add_argument("--space", required=True)
    p_bench.add_argument("--evaluator", required=True)
    p_bench.add_argument("--objective", required=True, help="objective to predict")
    p_bench.add_argument("--objective-spec", action="append",
                         help="name:direction[:unit] for external evaluators")
    p_bench.add_argument("--predictor", choices=["ridge", "svr"], default="ridge")
    p_bench.add_argument("--predictor-for", action="append", help=argparse.SUPPRESS)
    p_bench.add_argument("--encoding", choices=["one_hot", "ordinal_normalized"],
                         default=None)
    p_bench.add_argument("--ridge-lambda", type=float, default=None)
    p_bench.add_argument("--train-sizes", default="100:1000:100")
    p_bench.add_argument("--test-size", type=int, default=500)
    p_bench.add_argument("--trials", type=int, default=10)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--noise-scale", type=float, default=0.0)
    p_bench.add_argument("--noise-seed", type=int, default=0)
    p_bench.add_argument("--timeout", type=float, default=600.0)
    p_bench.add_argument("--out", help="CSV output path")
    p_bench.set_defaults(func=_cmd_predict_bench)

    p_an = sub.add_parser("analyze", help="plot-ready exports from a run directory")
    p_an.add_argument("run_dir")
    p_an.add_argument("--out", help="analysis output directory")
    p_an.set_defaults(func=_cmd_analyze)

    space_p = sub.add_parser("space", help="search-space tools")
    space_sub = space_p.add_subparsers(dest="space_cmd", required=True)
    p_info = space_sub.add_parser("info", help="cardinality and genome layout")
    p_info.add_argument("--space", required=True)
    p_info.add_argument("--constraints", help="apply a constraints file first")
    p_info.set_defaults(func=_cmd_space_info)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ProtocolError, EvaluationTimeout, EvaluationFailed) as exc:
        print(f"evaluator error: {exc}", file=sys.stderr)
        return EXIT_EVALUATOR
    except SubnetSearchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - top-level exit-code mapping
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
