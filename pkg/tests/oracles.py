"""Independent reference implementations used only by the tests."""

import itertools

import numpy as np

from cbrsim.clustering import kmeans_1d, silhouette_score
from cbrsim.clustering import DegenerateKError


def optimal_sse_1d(values, k):
    """Minimum within-cluster sum of squares over contiguous partitions (dynamic programming)."""
    xs = np.sort(np.asarray(values, dtype=float))
    n = len(xs)
    pre = np.concatenate([[0.0], np.cumsum(xs)])
    pre2 = np.concatenate([[0.0], np.cumsum(xs * xs)])

    def cost(i, j):  # points i..j-1
        s = pre[j] - pre[i]
        return (pre2[j] - pre2[i]) - s * s / (j - i)

    inf = float("inf")
    dp = [[inf] * (n + 1) for _ in range(k + 1)]
    dp[0][0] = 0.0
    for c in range(1, k + 1):
        for j in range(c, n + 1):
            dp[c][j] = min(dp[c - 1][i] + cost(i, j) for i in range(c - 1, j))
    return max(dp[k][n], 0.0)


def sse(values, centers, assignment):
    xs = np.asarray(values, dtype=float)
    c = np.asarray(centers, dtype=float)
    return float(((xs - c[np.asarray(assignment)]) ** 2).sum())


def exhaustive_choice(values, k_max):
    """Best (k, centers, assignment) by scanning every k, re-running k-means independently."""
    best = None
    for k in range(2, k_max + 1):
        try:
            centers, assignment = kmeans_1d(values, k)
        except DegenerateKError:
            continue
        used = sorted(set(assignment.tolist()))
        if len(used) < 2:
            continue
        score = silhouette_score(values, assignment)
        if best is None or score > best[0]:
            best = (score, k, [float(centers[i]) for i in used], [used.index(a) for a in assignment.tolist()])
    return best


def reachable_deliveries(events, src, created, deadline):
    """Earliest arrival time at every node by flooding over time-ordered contacts (start times)."""
    arrival = {src: created}
    for e in events:
        t = e.start
        if t < created or t > deadline:
            continue
        a, b = e.node_a, e.node_b
        if a in arrival and arrival[a] <= t and b not in arrival:
            arrival[b] = t
        elif b in arrival and arrival[b] <= t and a not in arrival:
            arrival[a] = t
    return arrival


def planted_dataset(rng, n, modes):
    centers = rng.uniform(0, 1, size=modes)
    spread = rng.uniform(0.005, 0.08)
    labels = rng.integers(0, modes, size=n)
    return centers[labels] + rng.normal(0, spread, size=n)


def all_label_permutations(assignment, k):
    for perm in itertools.permutations(range(k)):
        yield [perm[a] for a in assignment]
