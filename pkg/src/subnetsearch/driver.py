"""Search tactics: full search and concurrent (predictor-in-the-loop) search.

Full search trains one predictor per objective on an up-front validation
sample, runs the evolver against the predictors, then validates the predicted
front. Concurrent search alternates small validation batches with predictor
retraining and long predictor-backed searches, so competitive configurations
surface after very few real measurements. Both produce a SearchReport with a
hypervolume-versus-evaluations trace against a reference frozen at the first
validation population.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, EmptyInput, EvaluationFailed
from .evalmgr import (
    ResultStore,
    evaluate_batch,
    training_set,
)
from .evolver import (
    EvolverConfig,
    Individual,
    SearchTrace,
    evolve,
    select_best,
)
from .objectives import (
    IncrementalFront2D,
    ObjectiveSpec,
    ObjectiveVector,
    ParetoFront,
    check_unique_names,
    default_reference,
    front_to_csv,
    hv_trace_to_csv,
    pareto_front,
)
from .predict import KernelSpec, fit_ridge, fit_svr, predict
from .space import Genotype, SearchSpace, encode_matrix, repair_genotype, sample_uniform
from .util import subseed

PREDICTOR_FAMILIES = ("ridge", "svr", "none")


@dataclass(frozen=True)
class PredictorConfig:
    family: str = "ridge"  # "none" -> validation-backed search, no surrogates
    encoding: str = "one_hot"
    ridge_lambda: float = 1.0
    svr_c: float = 1.0
    svr_epsilon: float = 0.01
    svr_kernel: str = "rbf"
    svr_gamma: float | None = None
    families: dict[str, str] = field(default_factory=dict)  # per-objective override

    def __post_init__(self):
        for fam in [self.family, *self.families.values()]:
            if fam not in PREDICTOR_FAMILIES:
                raise ConfigError(f"unknown predictor family {fam!r}")

    def family_for(self, objective: str) -> str:
        return self.families.get(objective, self.family)


@dataclass(frozen=True)
class ConcurrentNasConfig:
    population_size: int = 50
    iterations: int = 3
    inner_generations: int = 250  # keep well above 200 so the inner search saturates
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    validation_only_objectives: tuple[str, ...] = ()
    warm_start: tuple[Genotype, ...] | None = None
    seed: int = 0
    inner_population: int | None = None
    crossover_rate: float = 0.9
    mutation_rate: float | None = None

    def __post_init__(self):
        if self.population_size < 1:
            raise ConfigError("population_size must be >= 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.inner_generations < 1:
            raise ConfigError("inner_generations must be >= 1")


@dataclass
class _FrontEntry:
    """Record shim so predicted fronts can reuse the front machinery."""

    genotype: Genotype
    objectives_raw: ObjectiveVector


@dataclass
class SearchReport:
    tactic: str
    space: SearchSpace
    specs: tuple[ObjectiveSpec, ...]
    store: ResultStore
    validation_populations: list[list]
    predicted_front: ParetoFront | None
    validated_front: ParetoFront
    final_candidates: list[Genotype]
    hv_reference: tuple[float, ...] | None
    hv_trace: list[tuple[int, float]]
    phase_seconds: dict[str, float]
    config: dict
    warnings: list[str]
    traces: list[SearchTrace]

    @property
    def validation_count(self) -> int:
        return len(self.store.validation_records())

    def final_hypervolume(self) -> float | None:
        return self.hv_trace[-1][1] if self.hv_trace else None

    def export(self, outdir: str | Path) -> Path:
        """Write front.csv, hv_trace.csv, evals.jsonl, config.json (and the
        predicted front when one exists)."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "config.json", "w", encoding="utf-8") as fh:
            json.dump(self.config, fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.store.dump(outdir / "evals.jsonl")
        front_to_csv(self.validated_front, outdir / "front.csv")
        if self.predicted_front is not None and len(self.predicted_front):
            front_to_csv(self.predicted_front, outdir / "predicted_front.csv")
        hv_trace_to_csv(self.hv_trace, outdir / "hv_trace.csv")
        return outdir


# ---------------------------------------------------------------------------
# Predictor plumbing
# ---------------------------------------------------------------------------


def fit_objective_predictor(pcfg: PredictorConfig, X, y, objective: str):
    family = pcfg.family_for(objective)
    if family == "ridge":
        return fit_ridge(X, y, pcfg.ridge_lambda, encoding_scheme=pcfg.encoding)
    if family == "svr":
        return fit_svr(
            X,
            y,
            C=pcfg.svr_c,
            epsilon=pcfg.svr_epsilon,
            kernel=KernelSpec(pcfg.svr_kernel, pcfg.svr_gamma),
            encoding_scheme=pcfg.encoding,
        )
    raise ConfigError(f"cannot fit predictor family {family!r} for {objective}")


def _train_models(store: ResultStore, pcfg: PredictorConfig, objectives):
    models = {}
    for name in objectives:
        X, y = training_set(store, name, pcfg.encoding)
        try:
            models[name] = fit_objective_predictor(pcfg, X, y, name)
        except Exception as exc:
            raise EvaluationFailed(
                f"predictor training failed for objective {name!r}: {exc}"
            ) from exc
    return models


def _worst_observed(store: ResultStore):
    """Per-objective worst raw value seen so far, used as a stand-in when a
    validation-only measurement fails inside the inner search."""
    worst = {}
    for rec in store.validation_records():
        for spec, value in zip(store.specs, rec.objectives_raw.values):
            cur = worst.get(spec.name)
            if cur is None:
                worst[spec.name] = value
            elif spec.direction == "minimize":
                worst[spec.name] = max(cur, value)
            else:
                worst[spec.name] = min(cur, value)
    return worst


def make_predictor_evaluate(
    space: SearchSpace,
    specs,
    models: dict,
    pcfg: PredictorConfig,
    validation_only=(),
    evaluator=None,
    store: ResultStore | None = None,
    gen: int | None = None,
    warn_sink: list | None = None,
):
    """Evaluate function mixing surrogate predictions with real measurements
    for objectives pinned to validation."""
    vo = set(validation_only)
    if vo and (evaluator is None or store is None):
        raise ConfigError("validation-only objectives need an evaluator and store")

    def evaluate(genotypes):
        X = encode_matrix(genotypes, space, pcfg.encoding)
        cols = {name: predict(m, X) for name, m in models.items()}
        measured = {}
        if vo:
            recs = evaluate_batch(genotypes, evaluator, store, gen=gen)
            worst = _worst_observed(store)
            for spec in specs:
                if spec.name not in vo:
                    continue
                column = []
                for rec in recs:
                    if rec.ok:
                        column.append(rec.objectives_raw.value_of(spec.name))
                    else:
                        column.append(worst[spec.name])
                        if warn_sink is not None:
                            warn_sink.append(
                                f"validation-only measurement failed: {rec.error}"
                            )
                measured[spec.name] = column
        out = []
        for k in range(len(genotypes)):
            values = tuple(
                measured[s.name][k] if s.name in vo else float(cols[s.name][k])
                for s in specs
            )
            out.append(ObjectiveVector(values, specs))
        return out

    return evaluate


def make_validation_evaluate(evaluator, store: ResultStore):
    """Evaluate function that measures every genotype; batch index becomes the
    gen tag in the log."""
    counter = {"gen": -1}

    def evaluate(genotypes):
        counter["gen"] += 1
        recs = evaluate_batch(genotypes, evaluator, store, gen=counter["gen"])
        bad = [r for r in recs if not r.ok]
        if bad:
            raise EvaluationFailed(
                f"{len(bad)} validation evaluations failed; first: {bad[0].error}"
            )
        return [r.objectives_raw for r in recs]

    return evaluate


# ---------------------------------------------------------------------------
# Hypervolume trace
# ---------------------------------------------------------------------------


def hypervolume_trace(
    store: ResultStore, reference, stride: int = 1
) -> list[tuple[int, float]]:
    """Cumulative-front hypervolume after every `stride` validation records.

    Records outside the (frozen) reference box are clamped out of the front
    with a warning rather than raising.
    """
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    recs = store.validation_records()
    if not recs:
        raise EmptyInput("no validation records")
    front = IncrementalFront2D(reference)
    out = []
    for k, rec in enumerate(recs, 1):
        front.insert(rec.objectives_raw.canonical_min)
        if k % stride == 0:
            out.append((k, front.hypervolume()))
    if len(recs) % stride != 0:
        out.append((len(recs), front.hypervolume()))
    if front.clamped:
        warnings.warn(
            f"{front.clamped} evaluations fell outside the hypervolume "
            "reference box and were clamped out of the front",
            stacklevel=2,
        )
    return out


def _maybe_reference(specs, records):
    if len(specs) != 2:
        return None
    return default_reference([r.objectives_raw for r in records])


def _trace_front(trace: SearchTrace) -> ParetoFront:
    entries = [
        _FrontEntry(e.genotype, e.objectives_raw) for e in trace.evaluations
    ]
    return pareto_front(entries)


# ---------------------------------------------------------------------------
# Full search
# ---------------------------------------------------------------------------


def full_search(
    space: SearchSpace,
    objectives,
    evaluator,
    predictor_cfg: PredictorConfig,
    evolver_cfg: EvolverConfig,
    n_train: int,
    warm_start=None,
    store: ResultStore | None = None,
    config_extra: dict | None = None,
) -> SearchReport:
    """Train predictors from an up-front sample, search against them, then
    validate the predicted front. With predictor family "none" the evolver
    measures every child instead (no sampling phase)."""
    specs = tuple(objectives)
    check_unique_names(specs)
    if store is None:
        store = ResultStore(specs, space=space)
    phase_seconds: dict[str, float] = {}
    warn_list: list[str] = []
    traces: list[SearchTrace] = []
    predicted_front = None

    if predictor_cfg.family == "none":
        t0 = time.perf_counter()
        trace = evolve(
            space,
            evolver_cfg,
            make_validation_evaluate(evaluator, store),
            warm_start=warm_start,
        )
        phase_seconds["search"] = time.perf_counter() - t0
        traces.append(trace)
        validation_populations = [store.validation_records()]
    else:
        if n_train < 1:
            raise ConfigError("n_train must be >= 1")
        if n_train < 100:
            warnings.warn(
                f"n_train={n_train} is small; predictors may be unreliable below "
                "100 samples",
                stacklevel=2,
            )
        t0 = time.perf_counter()
        sample = sample_uniform(space, n_train, subseed(evolver_cfg.seed, "train-sample"))
        recs = evaluate_batch(sample, evaluator, store, gen=0)
        ok = [r for r in recs if r.ok]
        warn_list.extend(r.error for r in recs if not r.ok)
        if not ok:
            raise EvaluationFailed("every training evaluation failed")
        phase_seconds["train_sample"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        models = _train_models(store, predictor_cfg, [s.name for s in specs])
        phase_seconds["train_predictors"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        trace = evolve(
            space,
            evolver_cfg,
            make_predictor_evaluate(space, specs, models, predictor_cfg),
            warm_start=warm_start,
            source="predicted",
        )
        phase_seconds["search"] = time.perf_counter() - t0
        traces.append(trace)
        predicted_front = _trace_front(trace)

        t0 = time.perf_counter()
        front_recs = evaluate_batch(
            [entry.genotype for entry in predicted_front], evaluator, store, gen=1
        )
        warn_list.extend(r.error for r in front_recs if not r.ok)
        phase_seconds["validate_front"] = time.perf_counter() - t0
        validation_populations = [ok, [r for r in front_recs if r.ok]]

    all_validated = store.validation_records()
    first_pop = validation_populations[0]
    reference = _maybe_reference(specs, first_pop if first_pop else all_validated)
    hv_trace = (
        hypervolume_trace(store, reference) if reference is not None else []
    )
    config = {
        "tactic": "full",
        "seed": evolver_cfg.seed,
        "n_train": n_train,
        "population_size": evolver_cfg.population_size,
        "generations": evolver_cfg.generations,
        "crossover_rate": evolver_cfg.crossover_rate,
        "mutation_rate": evolver_cfg.resolved_mutation_rate,
        "duplicate_retry_budget": evolver_cfg.resolved_retry_budget,
        "predictor": {
            "family": predictor_cfg.family,
            "encoding": predictor_cfg.encoding,
            "ridge_lambda": predictor_cfg.ridge_lambda,
            "svr_c": predictor_cfg.svr_c,
            "svr_epsilon": predictor_cfg.svr_epsilon,
            "svr_kernel": predictor_cfg.svr_kernel,
            "svr_gamma": predictor_cfg.svr_gamma,
            "families": dict(predictor_cfg.families),
        },
        "objectives": [
            {"name": s.name, "direction": s.direction, "unit": s.unit} for s in specs
        ],
        "warm_start": [list(g.genes) for g in warm_start] if warm_start else None,
        "hv_reference": list(reference) if reference else None,
        "evaluator_id": evaluator.evaluator_id,
    }
    config.update(config_extra or {})
    return SearchReport(
        tactic="full",
        space=space,
        specs=specs,
        store=store,
        validation_populations=validation_populations,
        predicted_front=predicted_front,
        validated_front=pareto_front(all_validated),
        final_candidates=[],
        hv_reference=reference,
        hv_trace=hv_trace,
        phase_seconds=phase_seconds,
        config=config,
        warnings=warn_list,
        traces=traces,
    )


# ---------------------------------------------------------------------------
# Concurrent search
# ---------------------------------------------------------------------------


def _initial_population(space, cfg: ConcurrentNasConfig) -> list[Genotype]:
    chosen: list[Genotype] = []
    keys: set[tuple[int, ...]] = set()
    if cfg.warm_start:
        for g in cfg.warm_start:
            rg = repair_genotype(g, space)
            if rg.genes not in keys:
                keys.add(rg.genes)
                chosen.append(rg)
        if len(chosen) > cfg.population_size:
            rng = np.random.default_rng(subseed(cfg.seed, "warm-subsample"))
            idx = sorted(
                int(i)
                for i in rng.choice(len(chosen), cfg.population_size, replace=False)
            )
            chosen = [chosen[i] for i in idx]
    attempt = 0
    while len(chosen) < cfg.population_size and attempt < 100:
        needed = cfg.population_size - len(chosen)
        for g in sample_uniform(space, needed, subseed(cfg.seed, "init-pad", attempt)):
            if g.genes not in keys and len(chosen) < cfg.population_size:
                keys.add(g.genes)
                chosen.append(g)
        attempt += 1
    return chosen


def concurrent_search(
    space: SearchSpace,
    objectives,
    evaluator,
    cfg: ConcurrentNasConfig,
    store: ResultStore | None = None,
    config_extra: dict | None = None,
) -> SearchReport:
    """Iterate: validate the current population, retrain predictors on all
    validation data, search the predictor landscape, and promote the best
    not-yet-validated configurations into the next population."""
    specs = tuple(objectives)
    check_unique_names(specs)
    for name in cfg.validation_only_objectives:
        if name not in {s.name for s in specs}:
            raise ConfigError(f"validation-only objective {name!r} not in run objectives")
    if store is None:
        store = ResultStore(specs, space=space)
    phase_seconds = {"validate": 0.0, "train_predictors": 0.0, "search": 0.0}
    warn_list: list[str] = []
    traces: list[SearchTrace] = []
    predicted_names = [
        s.name for s in specs if s.name not in set(cfg.validation_only_objectives)
    ]

    population = _initial_population(space, cfg)
    validated_keys: set[tuple[int, ...]] = set()
    validation_populations: list[list] = []
    reference = None
    last_trace: SearchTrace | None = None

    for i in range(cfg.iterations):
        t0 = time.perf_counter()
        recs = evaluate_batch(population, evaluator, store, gen=i)
        phase_seconds["validate"] += time.perf_counter() - t0
        ok = [r for r in recs if r.ok]
        warn_list.extend(r.error for r in recs if not r.ok)
        if not ok:
            raise EvaluationFailed(f"iteration {i}: every validation failed")
        validated_keys.update(r.genotype.genes for r in recs)
        validation_populations.append(ok)
        if reference is None:
            reference = _maybe_reference(specs, ok)

        t0 = time.perf_counter()
        models = _train_models(store, cfg.predictor, predicted_names)
        phase_seconds["train_predictors"] += time.perf_counter() - t0

        inner_cfg = EvolverConfig(
            population_size=cfg.inner_population or cfg.population_size,
            generations=cfg.inner_generations,
            crossover_rate=cfg.crossover_rate,
            mutation_rate=cfg.mutation_rate,
            seed=subseed(cfg.seed, "inner", i),
        )
        validated_front = pareto_front(store.validation_records())
        inner_warm = [r.genotype for r in validated_front] + population
        evaluate_fn = make_predictor_evaluate(
            space,
            specs,
            models,
            cfg.predictor,
            validation_only=cfg.validation_only_objectives,
            evaluator=evaluator,
            store=store,
            gen=i,
            warn_sink=warn_list,
        )
        t0 = time.perf_counter()
        trace = evolve(
            space, inner_cfg, evaluate_fn, warm_start=inner_warm, source="predicted"
        )
        phase_seconds["search"] += time.perf_counter() - t0
        traces.append(trace)
        last_trace = trace

        chosen = select_best(trace.final_population, cfg.population_size, exclude=validated_keys)
        if len(chosen) < cfg.population_size:
            pool = [
                Individual(e.genotype, e.objectives_raw) for e in trace.evaluations
            ]
            exclude = validated_keys | {ind.genotype.genes for ind in chosen}
            chosen += select_best(
                pool, cfg.population_size - len(chosen), exclude=exclude
            )
        population = [ind.genotype for ind in chosen]
        attempt = 0
        keys = validated_keys | {g.genes for g in population}
        while len(population) < cfg.population_size and attempt < 100:
            needed = cfg.population_size - len(population)
            for g in sample_uniform(
                space, needed, subseed(cfg.seed, "iter-pad", i, attempt)
            ):
                if g.genes not in keys and len(population) < cfg.population_size:
                    keys.add(g.genes)
                    population.append(g)
            attempt += 1

    all_validated = store.validation_records()
    hv_trace = (
        hypervolume_trace(store, reference) if reference is not None else []
    )
    config = {
        "tactic": "concurrent",
        "seed": cfg.seed,
        "population_size": cfg.population_size,
        "iterations": cfg.iterations,
        "inner_generations": cfg.inner_generations,
        "inner_population": cfg.inner_population or cfg.population_size,
        "crossover_rate": cfg.crossover_rate,
        "mutation_rate": cfg.mutation_rate,
        "validation_only_objectives": list(cfg.validation_only_objectives),
        "predictor": {
            "family": cfg.predictor.family,
            "encoding": cfg.predictor.encoding,
            "ridge_lambda": cfg.predictor.ridge_lambda,
            "svr_c": cfg.predictor.svr_c,
            "svr_epsilon": cfg.predictor.svr_epsilon,
            "svr_kernel": cfg.predictor.svr_kernel,
            "svr_gamma": cfg.predictor.svr_gamma,
            "families": dict(cfg.predictor.families),
        },
        "objectives": [
            {"name": s.name, "direction": s.direction, "unit": s.unit} for s in specs
        ],
        "warm_start": [list(g.genes) for g in cfg.warm_start] if cfg.warm_start else None,
        "hv_reference": list(reference) if reference else None,
        "evaluator_id": evaluator.evaluator_id,
    }
    config.update(config_extra or {})
    return SearchReport(
        tactic="concurrent",
        space=space,
        specs=specs,
        store=store,
        validation_populations=validation_populations,
        predicted_front=_trace_front(last_trace) if last_trace else None,
        validated_front=pareto_front(all_validated),
        final_candidates=population,
        hv_reference=reference,
        hv_trace=hv_trace,
        phase_seconds=phase_seconds,
        config=config,
        warnings=warn_list,
        traces=traces,
    )
