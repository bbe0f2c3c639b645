"""Evaluation manager: caching, persistence, synthetic surfaces, training data."""

import json
import threading

import numpy as np
import pytest

from subnetsearch.errors import (
    ConfigError,
    EmptyInput,
    NonCanonicalInput,
    ObjectiveMismatch,
)
from subnetsearch.evalmgr import (
    CallableEvaluator,
    EvaluationFailure,
    ResultStore,
    SyntheticSurfaceEvaluator,
    TableEvaluator,
    evaluate_batch,
    make_surface,
    synthetic_evaluate,
    training_set,
)
from subnetsearch.objectives import ObjectiveSpec, ObjectiveVector
from subnetsearch.space import (
    Genotype,
    canonicalize,
    encode_matrix,
    enumerate_genotypes,
    sample_uniform,
)

MIN2 = (ObjectiveSpec("f1", "minimize"), ObjectiveSpec("f2", "minimize"))


def constant_evaluator(values=(1.0, 2.0), specs=MIN2, evaluator_id="const"):
    return CallableEvaluator(
        lambda g: ObjectiveVector(values, specs), evaluator_id=evaluator_id
    )


# ---------------------------------------------------------------------------
# ResultStore
# ---------------------------------------------------------------------------


def test_store_appends_and_indexes(toy_space):
    store = ResultStore(MIN2, space=toy_space)
    g = sample_uniform(toy_space, 1, 0)[0]
    rec = store.append(g, ObjectiveVector((1.0, 2.0), MIN2), "validation", "e1")
    assert rec.sequence_number == 0
    assert store.lookup(g, "e1") is rec
    assert store.lookup(g, "e2") is None


def test_store_rejects_duplicate_validation(toy_space):
    store = ResultStore(MIN2, space=toy_space)
    g = sample_uniform(toy_space, 1, 0)[0]
    store.append(g, ObjectiveVector((1.0, 2.0), MIN2), "validation", "e1")
    with pytest.raises(ConfigError):
        store.append(g, ObjectiveVector((1.0, 2.0), MIN2), "validation", "e1")
    # same genotype under a different evaluator is a separate measurement
    store.append(g, ObjectiveVector((1.0, 3.0), MIN2), "validation", "e2")


def test_store_replay_round_trip(tmp_path, toy_space):
    path = tmp_path / "evals.jsonl"
    store = ResultStore(MIN2, space=toy_space, path=path)
    gs = sample_uniform(toy_space, 5, 1)
    for i, g in enumerate(gs):
        store.append(g, ObjectiveVector((float(i), 1.0), MIN2), "validation", "e1", gen=0)
    store.append_failure(gs[0], "exploded", "e1", gen=1)
    store.close()

    replayed = ResultStore.load(path, space=toy_space)
    assert len(replayed.records) == len(store.records)
    for a, b in zip(store.records, replayed.records):
        assert a.genotype.genes == b.genotype.genes
        assert a.sequence_number == b.sequence_number
        assert a.error == b.error
        if a.ok:
            assert a.objectives_raw.values == b.objectives_raw.values
    for g in gs:
        assert replayed.lookup(g, "e1").objectives_raw.values == store.lookup(
            g, "e1"
        ).objectives_raw.values


def test_store_dump_equals_streamed_log(tmp_path, toy_space):
    path = tmp_path / "a.jsonl"
    store = ResultStore(MIN2, space=toy_space, path=path)
    for i, g in enumerate(sample_uniform(toy_space, 4, 2)):
        store.append(g, ObjectiveVector((float(i), 0.0), MIN2), "validation", "e1")
    store.close()
    dumped = tmp_path / "b.jsonl"
    store.dump(dumped)
    assert path.read_bytes() == dumped.read_bytes()


def test_store_concurrent_appends_keep_total_order(toy_space):
    store = ResultStore(MIN2, space=toy_space)
    gs = sample_uniform(toy_space, 64, 3)

    def worker(chunk):
        for g in chunk:
            store.append(g, ObjectiveVector((0.0, 0.0), MIN2), "predicted", "e1")

    threads = [threading.Thread(target=worker, args=(gs[i::4],)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    seqs = [r.sequence_number for r in store.records]
    assert seqs == list(range(64))


# ---------------------------------------------------------------------------
# evaluate_batch
# ---------------------------------------------------------------------------


def test_batch_caches_within_and_across_batches(toy_space):
    calls = []

    def fn(g):
        calls.append(g.genes)
        return ObjectiveVector((1.0, 2.0), MIN2)

    ev = CallableEvaluator(fn, evaluator_id="count")
    store = ResultStore(MIN2, space=toy_space)
    g = sample_uniform(toy_space, 1, 0)[0]
    recs = evaluate_batch([g, g], ev, store)
    assert len(calls) == 1
    assert recs[0] is recs[1]
    recs2 = evaluate_batch([g], ev, store)
    assert len(calls) == 1  # cache hit, no dispatch
    assert recs2[0] is recs[0]


def test_batch_preserves_input_order(toy_space):
    ev = CallableEvaluator(
        lambda g: ObjectiveVector((float(sum(g.genes)), 0.0), MIN2), evaluator_id="sum"
    )
    store = ResultStore(MIN2, space=toy_space)
    gs = sample_uniform(toy_space, 10, 4)
    recs = evaluate_batch(gs, ev, store)
    assert [r.genotype.genes for r in recs] == [g.genes for g in gs]
    for g, r in zip(gs, recs):
        assert r.objectives_raw.values[0] == float(sum(g.genes))


def test_batch_empty_returns_empty(toy_space):
    store = ResultStore(MIN2, space=toy_space)
    assert evaluate_batch([], constant_evaluator(), store) == []


def test_batch_rejects_non_canonical(toy_space):
    store = ResultStore(MIN2, space=toy_space)
    g = sample_uniform(toy_space, 1, 0)[0]
    genes = list(g.genes)
    # force an inactive slot away from its canonical value
    b = toy_space.blocks[0]
    genes[b.depth_gene_index] = 1
    last_slot = b.governed_gene_indices[-1]
    genes[last_slot] = toy_space.allowed[last_slot][-1]
    bad = Genotype(tuple(genes))
    if canonicalize(bad, toy_space).genes != bad.genes:
        with pytest.raises(NonCanonicalInput):
            evaluate_batch([bad], constant_evaluator(), store)


def test_batch_failures_flagged_not_cached(toy_space):
    attempts = {"n": 0}

    def fn(g):
        attempts["n"] += 1
        if attempts["n"] == 1:
            raise RuntimeError("flaky")
        return ObjectiveVector((1.0, 1.0), MIN2)

    ev = CallableEvaluator(fn, evaluator_id="flaky")
    store = ResultStore(MIN2, space=toy_space)
    g = sample_uniform(toy_space, 1, 0)[0]
    first = evaluate_batch([g], ev, store)[0]
    assert not first.ok and "flaky" in first.error
    assert store.lookup(g, "flaky") is None  # failures are not cached
    second = evaluate_batch([g], ev, store)[0]  # retry succeeds
    assert second.ok


def test_batch_mixed_failure_keeps_successes(toy_space):
    def fn(g):
        if g.genes[0] == 1:
            raise RuntimeError("no depth-1 allowed")
        return ObjectiveVector((1.0, 1.0), MIN2)

    ev = CallableEvaluator(fn, evaluator_id="picky")
    store = ResultStore(MIN2, space=toy_space)
    gs = list({g.genes: g for g in sample_uniform(toy_space, 30, 7)}.values())
    recs = evaluate_batch(gs, ev, store)
    ok = [r for r in recs if r.ok]
    bad = [r for r in recs if not r.ok]
    assert ok and bad
    assert len(store.validation_records()) == len(ok)


def test_batch_parallel_jobs_matches_serial(toy_space):
    surface = make_surface(toy_space, "clx-like")
    ev = SyntheticSurfaceEvaluator(surface)
    gs = sample_uniform(toy_space, 40, 5)
    serial = evaluate_batch(gs, ev, ResultStore(surface.specs, space=toy_space))
    parallel = evaluate_batch(
        gs, ev, ResultStore(surface.specs, space=toy_space), jobs=4
    )
    for a, b in zip(serial, parallel):
        assert a.objectives_raw.values == b.objectives_raw.values


# ---------------------------------------------------------------------------
# synthetic surfaces
# ---------------------------------------------------------------------------


def test_surface_pure_and_deterministic(toy_space):
    surface = make_surface(toy_space, "clx-like", noise_scale=0.01)
    g = sample_uniform(toy_space, 1, 0)[0]
    first = synthetic_evaluate(g, surface).values
    for _ in range(200):
        assert synthetic_evaluate(g, surface).values == first


def test_surface_closed_form_at_all_minimum_genotype(toy_space):
    surface = make_surface(toy_space, "clx-like")
    g_min = Genotype(tuple(vals[0] for vals in toy_space.allowed))
    g_min = canonicalize(g_min, toy_space)
    vec = synthetic_evaluate(g_min, surface)
    # all ordinal features are zero: accuracy = max - span, latency = base +
    # sum of costs over active genes + interactions among active pairs
    assert vec.values[0] == pytest.approx(
        surface.accuracy_max - surface.accuracy_span
    )
    mask = toy_space.active_mask(g_min)
    lat = surface.latency_base + sum(
        c for c, m in zip(surface.latency_costs, mask) if m
    )
    lat += sum(w for p, q, w in surface.latency_interactions if mask[p] and mask[q])
    assert vec.values[1] == pytest.approx(lat)


def test_surface_latency_monotone_in_depth(toy_space):
    """Exhaustive: raising any depth gene never lowers latency."""
    surface = make_surface(toy_space, "clx-like")
    for g in enumerate_genotypes(toy_space):
        base = synthetic_evaluate(g, surface).values[1]
        for b in toy_space.blocks:
            vals = toy_space.allowed[b.depth_gene_index]
            cur = g.genes[b.depth_gene_index]
            for v in vals:
                if v <= cur:
                    continue
                genes = list(g.genes)
                genes[b.depth_gene_index] = v
                deeper = canonicalize(Genotype(tuple(genes)), toy_space)
                assert synthetic_evaluate(deeper, surface).values[1] >= base - 1e-12


def test_surface_presets_differ_in_latency_only(toy_space):
    clx = make_surface(toy_space, "clx-like")
    v100 = make_surface(toy_space, "v100-like")
    g = sample_uniform(toy_space, 1, 1)[0]
    a = synthetic_evaluate(g, clx).values
    b = synthetic_evaluate(g, v100).values
    assert a[0] == b[0]  # quality is hardware-independent
    assert a[1] != b[1]


def test_surface_rejects_non_canonical(toy_space):
    surface = make_surface(toy_space, "clx-like")
    g = sample_uniform(toy_space, 1, 0)[0]
    genes = list(g.genes)
    b = toy_space.blocks[0]
    genes[b.depth_gene_index] = 1
    slot = b.governed_gene_indices[-1]
    genes[slot] = toy_space.allowed[slot][-1]
    bad = Genotype(tuple(genes))
    if canonicalize(bad, toy_space).genes != bad.genes:
        with pytest.raises(NonCanonicalInput):
            synthetic_evaluate(bad, surface)


def test_surface_unknown_preset(toy_space):
    with pytest.raises(ConfigError):
        make_surface(toy_space, "tpu-like")


# ---------------------------------------------------------------------------
# table evaluator
# ---------------------------------------------------------------------------


def test_table_evaluator_lookup_and_missing(tmp_path, tiny_space):
    gs = sample_uniform(tiny_space, 3, 0)
    doc = {
        "objectives": [
            {"name": "top1", "direction": "maximize", "unit": ""},
            {"name": "latency_ms", "direction": "minimize", "unit": "ms"},
        ],
        "entries": [
            {"genes": list(g.genes), "objectives": {"top1": 0.5 + i / 10, "latency_ms": 10.0 + i}}
            for i, g in enumerate(gs[:2])
        ],
    }
    path = tmp_path / "lut.json"
    path.write_text(json.dumps(doc))
    ev = TableEvaluator(path)
    outs = ev.evaluate(gs)
    assert outs[0].values == (0.5, 10.0)
    assert isinstance(outs[2], EvaluationFailure)


# ---------------------------------------------------------------------------
# training_set
# ---------------------------------------------------------------------------


def test_training_set_filters_predicted_and_dedupes(toy_space):
    store = ResultStore(MIN2, space=toy_space)
    gs = sample_uniform(toy_space, 5, 6)
    for i, g in enumerate(gs[:3]):
        store.append(g, ObjectiveVector((float(i), 0.0), MIN2), "validation", "e1")
    for g in gs[3:]:
        store.append(g, ObjectiveVector((9.0, 9.0), MIN2), "predicted", "e1")
    X, y = training_set(store, "f1", "one_hot")
    assert X.shape[0] == 3
    assert y.tolist() == [0.0, 1.0, 2.0]
    assert np.allclose(X, encode_matrix(gs[:3], toy_space, "one_hot"))


def test_training_set_first_evaluator_wins_without_filter(toy_space):
    store = ResultStore(MIN2, space=toy_space)
    g = sample_uniform(toy_space, 1, 0)[0]
    store.append(g, ObjectiveVector((1.0, 0.0), MIN2), "validation", "cpu")
    store.append(g, ObjectiveVector((2.0, 0.0), MIN2), "validation", "gpu")
    _, y = training_set(store, "f1", "one_hot")
    assert y.tolist() == [1.0]
    _, y_gpu = training_set(store, "f1", "one_hot", evaluator_id="gpu")
    assert y_gpu.tolist() == [2.0]


def test_training_set_unknown_objective(toy_space):
    store = ResultStore(MIN2, space=toy_space)
    g = sample_uniform(toy_space, 1, 0)[0]
    store.append(g, ObjectiveVector((1.0, 0.0), MIN2), "validation", "e1")
    with pytest.raises(ObjectiveMismatch):
        training_set(store, "nope", "one_hot")
    with pytest.raises(EmptyInput):
        training_set(ResultStore(MIN2, space=toy_space), "f1", "one_hot")
