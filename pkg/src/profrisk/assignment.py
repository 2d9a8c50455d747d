"""Assignment baselines: Hungarian, per-pair thresholding, and an exhaustive oracle."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import Match, MatchSet, SimilarityMatrix, default_ids
from .errors import EmptyInput, InvalidConfig, TooLarge

BRUTE_FORCE_LIMIT = 8


@dataclass(frozen=True)
class Assignment:
    pairs: frozenset[tuple[str, str]]
    total_similarity: float

    def as_matchset(self, R: SimilarityMatrix, threshold: float = -math.inf) -> MatchSet:
        """Matches scored by similarity, keeping those at or above ``threshold``."""
        ai, ti = R.aux_index(), R.target_index()
        out = []
        for a, t in sorted(self.pairs):
            s = float(R.combined[ai[a], ti[t]])
            if s >= threshold:
                out.append(Match(a, t, s))
        return MatchSet(tuple(out))


def _unpack(R):
    """(values as nested lists, aux ids, target ids) with masked-out entries set to 0."""
    if isinstance(R, SimilarityMatrix):
        vals = np.where(R.mask, R.combined, 0.0)
        return vals.tolist(), R.aux_ids, R.target_ids
    arr = np.asarray(R)
    if arr.ndim != 2:
        raise EmptyInput("expected a 2-D matrix")
    return arr.tolist(), default_ids("a", arr.shape[0]), default_ids("t", arr.shape[1])


def _min_cost_assignment(cost: list[list]) -> list[int]:
    """Row -> column of a minimum-cost perfect matching of a square matrix.

    Shortest augmenting paths with row/column potentials, one row at a time;
    O(n^3). Loops are written out element by element on purpose: runtime
    then tracks the algorithm's own operation count.
    """
    n = len(cost)
    inf = math.inf
    u = [0] * (n + 1)
    v = [0] * (n + 1)
    p = [0] * (n + 1)  # p[j]: row matched to column j (1-based, 0 = free)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = cost[i0 - 1]
            ui0 = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col_of = [0] * n
    for j in range(1, n + 1):
        col_of[p[j] - 1] = j - 1
    return col_of


def hungarian(R) -> Assignment:
    """Maximum-total-similarity one-to-one assignment.

    Rectangular inputs are padded to square with zero similarity and the
    padded pairs dropped from the result, so |pairs| = min(N, M).
    """
    vals, aux_ids, target_ids = _unpack(R)
    n, m = len(vals), len(vals[0]) if vals else 0
    if n == 0 or m == 0:
        raise EmptyInput("empty similarity matrix")
    size = max(n, m)
    padded = [row + [0] * (size - m) for row in vals] + [[0] * size for _ in range(size - n)]
    top = max(max(row) for row in padded)
    cost = [[top - x for x in row] for row in padded]
    col_of = _min_cost_assignment(cost)
    pairs = [(i, col_of[i]) for i in range(n) if col_of[i] < m]
    total = sum(vals[i][j] for i, j in pairs)
    return Assignment(frozenset((aux_ids[i], target_ids[j]) for i, j in pairs), total)


def threshold_classifier(R: SimilarityMatrix, threshold: float) -> MatchSet:
    """Every stored pair whose combined similarity reaches ``threshold``; many-to-many."""
    hits = np.argwhere(R.mask & (R.combined >= threshold))
    return MatchSet(tuple(Match(R.aux_ids[i], R.target_ids[j], float(R.combined[i, j])) for i, j in hits))


def brute_force_assignment(R, objective: str = "max_sum") -> Assignment:
    """Exhaustive search over injections of the smaller side into the larger one."""
    vals, aux_ids, target_ids = _unpack(R)
    n, m = len(vals), len(vals[0]) if vals else 0
    if n == 0 or m == 0:
        raise EmptyInput("empty similarity matrix")
    if max(n, m) > BRUTE_FORCE_LIMIT:
        raise TooLarge(f"brute force limited to {BRUTE_FORCE_LIMIT} users per side")
    if objective == "max_sum":
        agg = sum
    elif objective == "max_product":
        agg = math.prod
    else:
        raise InvalidConfig(f"unknown objective {objective!r}")

    best_val, best_pairs = None, None
    if n <= m:
        candidates = (list(zip(range(n), perm)) for perm in itertools.permutations(range(m), n))
    else:
        candidates = (list(zip(perm, range(m))) for perm in itertools.permutations(range(n), m))
    for pairs in candidates:
        val = agg(vals[i][j] for i, j in pairs)
        if best_val is None or val > best_val:
            best_val, best_pairs = val, pairs
    total = sum(vals[i][j] for i, j in best_pairs)
    return Assignment(frozenset((aux_ids[i], target_ids[j]) for i, j in best_pairs), total)
