"""Independent reference implementations used by several test modules."""

from itertools import combinations

import numpy as np


def feasible_assignments(n_t, n_s, k):
    """Every way to give each target k distinct, unshared sources."""
    def rec(t, free):
        if t == n_t:
            yield ()
            return
        for combo in combinations(sorted(free), k):
            for rest in rec(t + 1, free - set(combo)):
                yield (combo,) + rest
    yield from rec(0, frozenset(range(n_s)))


def lex_best_assignment(sim, k):
    """Brute force: the assignment whose chosen (target, source) pairs, ranked
    by (-similarity, source, target) and sorted, form the smallest sequence.

    Any disjoint partial assignment extends to a complete one when
    k * targets <= sources, so this is exactly what picking the best free
    pair at every step produces.
    """
    sim = np.asarray(sim, dtype=np.float64)
    n_t, n_s = sim.shape
    pairs = sorted(((-sim[t, s], s, t) for t in range(n_t) for s in range(n_s)))
    rank = {(t, s): i for i, (_, s, t) in enumerate(pairs)}
    best, best_key = None, None
    for a in feasible_assignments(n_t, n_s, k):
        key = sorted(rank[t, s] for t, srcs in enumerate(a) for s in srcs)
        if best_key is None or key < best_key:
            best, best_key = a, key
    return tuple(tuple(sorted(x)) for x in best)


def nearest_centroid_accuracy(train_x, train_y, test_x, test_y):
    classes = np.unique(train_y)
    cents = np.stack([train_x[train_y == c].mean(axis=0) for c in classes])
    d = ((test_x[:, None, :] - cents[None]) ** 2).sum(axis=-1)
    return float((classes[d.argmin(axis=1)] == test_y).mean())
