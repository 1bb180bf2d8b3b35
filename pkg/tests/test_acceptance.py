"""Acceptance criteria, one test each.

Every test prints a single ``[AC-n] PASS|FAIL`` line (also repeated in the
pytest terminal summary) and then asserts the criterion at its stated
tolerance. ``python3 tests/test_acceptance.py`` runs just this module.
"""

import json
import math
import sys

import numpy as np
import pytest
from conftest import REFERENCE_SYNTH, WORKED_EXAMPLE
from oracles import (
    naive_rank,
    naive_recall,
    numeric_gradient,
    random_problem,
    relative_error,
)

from kgsampling.experiment import RunConfig, run_baseline_compare, run_experiment
from kgsampling.groups import (
    PartitionPolicy,
    build_group_index,
    build_support_set,
    corpus_to_jsonl,
    index_to_json,
    restrict_index,
    write_corpus,
)
from kgsampling.model import (
    EncoderParams,
    TrainConfig,
    contrastive_loss,
    epoch_means,
    loss_gradients,
    loss_trace_csv,
    train,
)
from kgsampling.parser import extract_concepts
from kgsampling.retrieval import rank_all, recall_at_k
from kgsampling.sampler import (
    SamplerConfig,
    compute_boundary,
    make_rng,
    sample_batch,
    validate_batch,
)
from kgsampling.synth import generate_corpus

RESULTS: list[str] = []


def report(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"[AC-{n}] {'PASS' if ok else 'FAIL'} {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def reference_file(tmp_path_factory, reference_corpus):
    path = tmp_path_factory.mktemp("acceptance") / "reference.jsonl"
    write_corpus(reference_corpus, path)
    return path


def test_ac1_parser_oracle(labeled_reports, lexicon):
    errors = [r["report"] for r in labeled_reports
              if extract_concepts(r["report"], lexicon).to_list() != sorted(r["concepts"])]
    worked = extract_concepts(WORKED_EXAMPLE, lexicon).to_list()
    expected = ["architectural_distortion", "heterogeneously_dense", "mass"]
    report(1, "parser oracle", not errors and worked == expected and len(labeled_reports) == 50,
           f"{len(errors)} errors on {len(labeled_reports)} labeled reports; worked example -> {worked}")


def test_ac2_sampler_exactness(reference_index):
    cfg = SamplerConfig(8, 0.375)
    rng = make_rng(0)
    bad = 0
    for _ in range(1000):
        batch = sample_batch(reference_index, cfg, rng)
        strata = [s.stratum for s in batch.slots]
        exact = (strata.count("frequent"), strata.count("rare")) == (5, 3) and len(set(batch.group_ids)) == 8
        bad += not (exact and validate_batch(batch, reference_index, cfg).ok)
    report(2, "sampler exactness", cfg.boundary == 3 and bad == 0,
           f"b={cfg.boundary}, {bad}/1000 batches violate 5 frequent + 3 rare with 8 distinct groups")


def test_ac3_boundary_formula():
    grid = {(8, 0.375): 3, (32, 0.25): 8, (32, 0.375): 12, (32, 0.5): 16, (32, 0.75): 24}
    got = {k: compute_boundary(*k) for k in grid}
    report(3, "boundary formula", got == grid,
           ", ".join(f"({B},{R})->{b}" for (B, R), b in got.items()))


def test_ac4_recall_oracle():
    mismatches = 0
    sizes = []
    for seed in range(50):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(2, 201))
        sizes.append(n)
        ids, vecs, groups = random_problem(rng, n, n_groups=int(rng.integers(1, 15)))
        rankings = rank_all(ids, vecs, ids, vecs)
        cands = list(zip(ids, vecs))
        naive = [naive_rank(q, cands) for q in vecs]
        mismatches += sum(list(r.candidate_ids) != o for r, o in zip(rankings, naive))
        for K in (1, 5, 10):
            mismatches += recall_at_k(rankings, groups, K) != naive_recall(ids, naive, groups, K)
    report(4, "recall oracle", mismatches == 0,
           f"{mismatches} mismatches over 50 corpora (n={min(sizes)}..{max(sizes)})")


def test_ac5_gradient_check():
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        B, D, V, E = 4, 6, 6, 3
        params = EncoderParams(rng.standard_normal((D, E)), rng.standard_normal((V, E)),
                               float(rng.uniform(0.1, 1.0)))
        X_img, X_txt = rng.standard_normal((B, D)), rng.standard_normal((B, V))
        _, g_img, g_txt = loss_gradients(params, X_img, X_txt)
        loss = lambda: loss_gradients(params, X_img, X_txt)[0]  # noqa: E731
        worst = max(worst, relative_error(g_img, numeric_gradient(loss, params.w_img)),
                    relative_error(g_txt, numeric_gradient(loss, params.w_txt)))
    z = np.array([[0.6, 0.8]])
    b1, _ = contrastive_loss(z, z, 0.07)
    b2, _ = contrastive_loss(np.eye(2), np.eye(2), 1.0)
    b2_err = abs(b2 - math.log(1 + math.exp(-1)))
    report(5, "gradient check", worst < 1e-4 and b1 == 0.0 and b2_err < 1e-9,
           f"max rel err {worst:.2e} over 20 instances; B=1 loss {b1}; B=2 |err| {b2_err:.1e}")


def test_ac6_training_sanity(reference_train, reference_index, lexicon):
    cfg = TrainConfig(epochs=5, sampler=SamplerConfig(8, 0.375))
    _, trace = train(reference_train, reference_index, cfg, lexicon)
    means = epoch_means(trace)
    report(6, "training sanity", means[-1] < means[0],
           "epoch mean loss " + " -> ".join(f"{m:.3f}" for m in means))


def test_ac7_directional_improvement(reference_file):
    cfg = RunConfig(corpus=str(reference_file), seeds="0,1,2,3,4")
    result = run_baseline_compare(cfg)
    sel = result["mean"]["selective"]["report_to_image"]["tail"]["10"]
    rnd = result["mean"]["random"]["report_to_image"]["tail"]["10"]
    gain = result["tail_report_to_image_r10_gain"]
    report(7, "directional improvement", gain >= 0.05,
           f"tail report-to-image R@10 selective {sel:.3f} vs random {rnd:.3f}, "
           f"gain {100 * gain:+.1f} points over 5 seeds ({result['n_eval_queries']['tail']} tail queries)")


def test_ac8_fewshot_bookkeeping(reference_index):
    support = build_support_set(reference_index, K=10, seed=0)
    expected = sum(min(10, c) for c in reference_index.frequencies.values())
    sub = restrict_index(reference_index, support, PartitionPolicy.min_count(5))
    disjoint = not (sub.frequent & sub.rare)
    complete = (sub.frequent | sub.rare) == set(sub.groups) == set(reference_index.groups)
    changed = sub.frequent != reference_index.frequent
    report(8, "few-shot bookkeeping",
           len(support) == expected and disjoint and complete and changed,
           f"support {len(support)} == {expected}; recalibrated {len(sub.frequent)} frequent / "
           f"{len(sub.rare)} rare vs full {len(reference_index.frequent)} / {len(reference_index.rare)}")


def _artifacts(lexicon, out_dir, corpus_path):
    corpus = generate_corpus(REFERENCE_SYNTH, lexicon)
    write_corpus(corpus, corpus_path)
    train_split = [i for i in corpus if i.split == "train"]
    index = build_group_index(train_split, lexicon, PartitionPolicy.top_n(20))
    cfg = SamplerConfig(8, 0.375, seed=7)
    rng = make_rng(7)
    batches = json.dumps([sample_batch(index, cfg, rng).to_dict() for _ in range(200)])
    _, trace = train(train_split, index, TrainConfig(epochs=2), lexicon)
    run_experiment(RunConfig(corpus=str(corpus_path), output_dir=str(out_dir), epochs=2), "full")
    files = {p.name: p.read_bytes() for p in sorted(out_dir.iterdir())}
    return {"corpus": corpus_to_jsonl(corpus).encode(), "index": index_to_json(index).encode(),
            "batches": batches.encode(), "loss_trace": loss_trace_csv(trace).encode(), **files}


def test_ac9_determinism(lexicon, tmp_path):
    a = _artifacts(lexicon, tmp_path / "a", tmp_path / "a.jsonl")
    b = _artifacts(lexicon, tmp_path / "b", tmp_path / "b.jsonl")
    differing = sorted(k for k in a if a[k] != b.get(k))
    report(9, "determinism", not differing and a.keys() == b.keys(),
           f"{len(a)} artifacts compared byte for byte; differing: {differing or 'none'}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
