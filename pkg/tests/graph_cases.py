"""Random graph generators shared by the feature tests and the acceptance suite."""

import random

import numpy as np

from botgraph.graphfeat import graph_from_edges


def random_multigraph(rng: random.Random, max_nodes=8, max_mult=3):
    """(names, packet list of (i, j) index pairs) with repeats and occasional self-loops."""
    n = rng.randint(1, max_nodes)
    p = rng.choice([0.1, 0.25, 0.4, 0.7])
    pairs = []
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < p:
                pairs.extend([(i, j)] * rng.randint(1, max_mult))
    if n > 1 and rng.random() < 0.2:
        k = rng.randrange(n)
        pairs.append((k, k))
    rng.shuffle(pairs)
    names = [f"10.1.{rng.randrange(256)}.{i}" for i in range(n)]
    return names, pairs


def to_graph(names, pairs, mode):
    return graph_from_edges([(names[a], names[b]) for a, b in pairs], mode, nodes=names)


def dense(names, pairs):
    n = len(names)
    A = np.zeros((n, n))
    for a, b in pairs:
        if a != b:
            A[a, b] += 1.0
    return A
