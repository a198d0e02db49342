"""Exact structure search over a score cache.

Dynamic programming over node subsets: for each node the best admissible
parent set inside every candidate set is tabulated by one sweep over the
subset lattice, then the optimal sink ordering is found by
``F(S) = min_v F(S - v) + best(v, S - v)``.

Scores are compared exactly: every loss in the cache is a binary float, so
all of them are rescaled to integers over a common power-of-two
denominator. Ties are broken by fewer total parents, then by the parent
bitmasks compared child by child from the lowest child index.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from .cache import ScoreCache, check_score_kind, mask_members
from .errors import IncompleteCache, KTooLarge, ValidationError

MAX_K = 25
MAX_BRUTE_K = 5


@dataclass(frozen=True, eq=False)
class Dag:
    """Adjacency with ``adjacency[child, parent] == 1`` for an arc parent -> child."""

    adjacency: np.ndarray
    node_names: tuple[str, ...]

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=np.int8)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValidationError("adjacency must be square")
        if len(self.node_names) != a.shape[0]:
            raise ValidationError("node_names length does not match adjacency")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)
        object.__setattr__(self, "node_names", tuple(self.node_names))

    @property
    def k(self) -> int:
        return len(self.node_names)

    @classmethod
    def empty(cls, names: Sequence[str]) -> "Dag":
        return cls(np.zeros((len(names), len(names)), dtype=np.int8), tuple(names))

    @classmethod
    def from_parent_masks(cls, masks: Sequence[int], names: Sequence[str]) -> "Dag":
        k = len(names)
        a = np.zeros((k, k), dtype=np.int8)
        for j, m in enumerate(masks):
            for i in mask_members(m):
                a[j, i] = 1
        return cls(a, tuple(names))

    def parent_mask(self, j: int) -> int:
        return sum(1 << int(i) for i in np.flatnonzero(self.adjacency[j]))

    def parents(self, j: int) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.adjacency[j])]

    def arcs(self) -> list[tuple[str, str]]:
        """Arcs as ``(parent, child)`` name pairs."""
        return [(self.node_names[p], self.node_names[c]) for c, p in np.argwhere(self.adjacency)]

    @property
    def n_arcs(self) -> int:
        return int(self.adjacency.sum())

    def __eq__(self, other):
        if not isinstance(other, Dag):
            return NotImplemented
        return self.node_names == other.node_names and np.array_equal(self.adjacency, other.adjacency)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["", *self.node_names])
        for name, row in zip(self.node_names, self.adjacency):
            w.writerow([name, *(str(int(v)) for v in row)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Dag":
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        if not rows:
            raise ValidationError("DAG CSV is empty")
        cols = [c.strip() for c in rows[0][1:]]
        body = rows[1:]
        if [r[0].strip() for r in body] != cols:
            raise ValidationError("DAG CSV row names must match the header")
        try:
            a = np.array([[int(v) for v in r[1:]] for r in body], dtype=np.int8)
        except ValueError:
            raise ValidationError("DAG CSV cells must be 0 or 1") from None
        if a.shape != (len(cols), len(cols)) or not np.isin(a, (0, 1)).all():
            raise ValidationError("DAG CSV must be a square 0/1 matrix")
        return cls(a, tuple(cols))

    def to_dot(self, name: str = "dag") -> str:
        lines = [f"digraph {name} {{"]
        lines += [f'  "{n}";' for n in self.node_names]
        lines += [f'  "{p}" -> "{c}";' for p, c in self.arcs()]
        lines.append("}")
        return "\n".join(lines) + "\n"


def is_acyclic(g: Dag | np.ndarray) -> bool:
    """Kahn elimination of parentless nodes; True iff every node is removed."""
    a = np.asarray(g.adjacency if isinstance(g, Dag) else g) != 0
    k = a.shape[0]
    indeg = a.sum(axis=1).astype(int)
    queue = [j for j in range(k) if indeg[j] == 0]
    seen = 0
    while queue:
        v = queue.pop()
        seen += 1
        for c in np.flatnonzero(a[:, v]):
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(int(c))
    return seen == k


def _masks_acyclic(masks: Sequence[int]) -> bool:
    remaining = (1 << len(masks)) - 1
    while remaining:
        free = [j for j in mask_members(remaining) if masks[j] & remaining == 0]
        if not free:
            return False
        for j in free:
            remaining &= ~(1 << j)
    return True


def _exact_losses(cache: ScoreCache, kind: str) -> list[list[int]]:
    ratios = [[e.loss(kind).as_integer_ratio() for e in per] for per in cache.entries]
    den = max((d for per in ratios for _, d in per), default=1)
    return [[num * (den // d) for num, d in per] for per in ratios]


def _tie_shift(k: int, j: int) -> int:
    return k * (k - 1 - j)


def _compress(mask: int, j: int) -> int:
    low = mask & ((1 << j) - 1)
    return low | ((mask >> (j + 1)) << j)


def _check(cache: ScoreCache, kind: str) -> None:
    check_score_kind(kind)
    if cache.k > MAX_K:
        raise KTooLarge(f"k={cache.k} exceeds the exact-search limit of {MAX_K}")
    for j, per in enumerate(cache.entries):
        if not per:
            raise IncompleteCache(f"node {cache.node_names[j]!r} has no licit parent set")


def _result(cache: ScoreCache, chosen: Sequence[int], kind: str) -> tuple[Dag, float]:
    entries = [cache.entries[j][i] for j, i in enumerate(chosen)]
    dag = Dag.from_parent_masks([e.parents for e in entries], cache.node_names)
    return dag, math.fsum(e.score(kind) for e in entries)


def most_probable_dag(cache: ScoreCache, score_kind: str = "bic") -> tuple[Dag, float]:
    """Globally optimal DAG for ``score_kind`` and its total score.

    The total is the exactly rounded sum of the node scores in their natural
    direction (a log-likelihood for ``mlik``, a loss otherwise).
    """
    _check(cache, score_kind)
    k = cache.k
    losses = _exact_losses(cache, score_kind)

    # best[j][compressed S]: index of the best entry of child j with parents within S
    best: list[list[int | None]] = []
    for j, per in enumerate(cache.entries):
        size = 1 << (k - 1)
        table: list[int | None] = [None] * size
        keys: list[tuple | None] = [None] * size
        for i, e in enumerate(per):
            c = _compress(e.parents, j)
            key = (losses[j][i], e.n_parents, e.parents)
            if keys[c] is None or key < keys[c]:
                table[c], keys[c] = i, key
        for b in range(k - 1):
            bit = 1 << b
            for c in range(size):
                if c & bit and keys[c ^ bit] is not None:
                    if keys[c] is None or keys[c ^ bit] < keys[c]:
                        table[c], keys[c] = table[c ^ bit], keys[c ^ bit]
        best.append(table)

    full = (1 << k) - 1
    F: list[tuple | None] = [None] * (full + 1)
    pick: list[tuple[int, int] | None] = [None] * (full + 1)
    F[0] = (0, 0, 0)
    for S in range(1, full + 1):
        cur = None
        rem = S
        while rem:
            low = rem & -rem
            rem ^= low
            v = low.bit_length() - 1
            R = S ^ low
            if F[R] is None:
                continue
            i = best[v][_compress(R, v)]
            if i is None:
                continue
            e = cache.entries[v][i]
            fr = F[R]
            key = (fr[0] + losses[v][i], fr[1] + e.n_parents, fr[2] + (e.parents << _tie_shift(k, v)))
            if cur is None or key < cur:
                cur, pick[S] = key, (v, i)
        F[S] = cur
    if F[full] is None:
        raise IncompleteCache("no acyclic combination of cached parent sets exists")
    chosen = [0] * k
    S = full
    while S:
        v, i = pick[S]
        chosen[v] = i
        S ^= 1 << v
    return _result(cache, chosen, score_kind)


def brute_force_dag(cache: ScoreCache, score_kind: str = "bic") -> tuple[Dag, float]:
    """Exhaustive search over every acyclic combination of cache entries (k <= 5)."""
    _check(cache, score_kind)
    k = cache.k
    if k > MAX_BRUTE_K:
        raise KTooLarge(f"brute force is limited to k <= {MAX_BRUTE_K}")
    losses = _exact_losses(cache, score_kind)
    best_key, best_pick = None, None
    for chosen in product(*(range(len(per)) for per in cache.entries)):
        entries = [cache.entries[j][i] for j, i in enumerate(chosen)]
        masks = [e.parents for e in entries]
        if not _masks_acyclic(masks):
            continue
        key = (
            sum(losses[j][i] for j, i in enumerate(chosen)),
            sum(e.n_parents for e in entries),
            sum(m << _tie_shift(k, j) for j, m in enumerate(masks)),
        )
        if best_key is None or key < best_key:
            best_key, best_pick = key, chosen
    if best_pick is None:
        raise IncompleteCache("no acyclic combination of cached parent sets exists")
    return _result(cache, best_pick, score_kind)


def dag_total(cache: ScoreCache, dag: Dag, score_kind: str) -> float:
    """Sum of cached node scores for an arbitrary DAG over the cache's nodes."""
    check_score_kind(score_kind)
    if dag.node_names != cache.node_names:
        raise ValidationError("DAG nodes do not match the cache")
    scores = []
    for j in range(cache.k):
        e = cache.lookup(j, dag.parent_mask(j))
        if e is None:
            raise IncompleteCache(f"parent set of {cache.node_names[j]!r} is not in the cache")
        scores.append(e.score(score_kind))
    return math.fsum(scores)
