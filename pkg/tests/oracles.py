"""Independent reference implementations used as test oracles.

These deliberately avoid the package's code paths: plain Python loops,
explicit comparators, and finite differences.
"""

import functools

import numpy as np


def naive_dot(u, v):
    total = 0.0
    for a, b in zip(u, v):
        total += a * b
    return total


def naive_rank(query, candidates):
    """Candidate ids by descending dot product, ties by ascending id."""
    scored = [(cid, naive_dot(query, vec)) for cid, vec in candidates]

    def before(x, y):
        if x[1] != y[1]:
            return -1 if x[1] > y[1] else 1
        return -1 if x[0] < y[0] else (1 if x[0] > y[0] else 0)

    return [cid for cid, _ in sorted(scored, key=functools.cmp_to_key(before))]


def naive_recall(query_ids, rankings, group_of, K):
    hits = 0
    for qid, ranking in zip(query_ids, rankings):
        kept = 0
        found = False
        for cid in ranking:
            if cid == qid:
                continue
            kept += 1
            if kept > K:
                break
            if group_of[cid] == group_of[qid]:
                found = True
                break
        hits += found
    return hits / len(query_ids)


def random_problem(rng, n, n_groups, dim=3):
    """Integer-grid vectors (so exact score ties are common) with random labels."""
    vecs = rng.integers(-2, 3, size=(n, dim)).astype(float)
    ids = [f"i{j:03d}" for j in rng.permutation(n)]
    groups = {iid: f"g{rng.integers(n_groups)}" for iid in ids}
    return ids, vecs, groups


def numeric_gradient(loss_fn, w, h=1e-5):
    """Central differences of ``loss_fn()`` w.r.t. the array ``w`` (perturbed in place)."""
    grad = np.zeros_like(w)
    for idx in np.ndindex(w.shape):
        orig = w[idx]
        w[idx] = orig + h
        up = loss_fn()
        w[idx] = orig - h
        down = loss_fn()
        w[idx] = orig
        grad[idx] = (up - down) / (2 * h)
    return grad


def relative_error(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))
