"""Ground-truth networks, ancestral sampling and structure-recovery counts."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit, softmax

from .data import Dataset, DistributionKind
from .errors import NodeMismatch, ValidationError
from .search import Dag

COEF_BAND = (0.5, 2.0)
INTERCEPT_BAND = (-0.5, 0.5)
POISSON_CLAMP = 30.0


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """A DAG with its generating parameters.

    ``coefficients[(child, parent)]`` is an array of shape
    ``(outputs of child, design width of parent)``; outputs are ``C - 1`` for
    a multinomial child and 1 otherwise. ``intercepts[j]`` has one entry per
    output of node ``j``.
    """

    dag: Dag
    coefficients: dict[tuple[int, int], np.ndarray]
    intercepts: tuple[np.ndarray, ...]
    gaussian_sd: tuple[float, ...]
    dists: tuple[DistributionKind, ...]

    @property
    def k(self) -> int:
        return self.dag.k

    def to_json(self) -> str:
        names = self.dag.node_names
        doc = {
            "nodes": list(names),
            "dists": {n: d.to_json() for n, d in zip(names, self.dists)},
            "intercepts": {n: [float(v) for v in b] for n, b in zip(names, self.intercepts)},
            "gaussian_sd": {n: float(s) for n, s, d in zip(names, self.gaussian_sd, self.dists)
                            if d.kind == "gaussian"},
            "coefficients": [
                {"parent": names[p], "child": names[c], "values": np.asarray(v).tolist()}
                for (c, p), v in sorted(self.coefficients.items())
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str, dag: Dag) -> "GroundTruth":
        doc = json.loads(text)
        names = list(dag.node_names)
        if doc["nodes"] != names:
            raise NodeMismatch("truth JSON nodes do not match the adjacency CSV")
        pos = {n: i for i, n in enumerate(names)}
        dists = tuple(DistributionKind.parse(doc["dists"][n]) for n in names)
        coefs = {(pos[c["child"]], pos[c["parent"]]): np.array(c["values"], dtype=float)
                 for c in doc["coefficients"]}
        return cls(
            dag,
            coefs,
            tuple(np.array(doc["intercepts"][n], dtype=float) for n in names),
            tuple(float(doc["gaussian_sd"].get(n, 1.0)) for n in names),
            dists,
        )


def _outputs(dist: DistributionKind) -> int:
    return dist.levels - 1 if dist.kind == "multinomial" else 1


def random_dag(
    k: int,
    density: float,
    dists: Sequence[DistributionKind | str] | DistributionKind | str = "gaussian",
    seed: int = 0,
    names: Sequence[str] | None = None,
) -> GroundTruth:
    """Random ground truth: each arc consistent with a random node order is
    kept with probability ``density``; arc coefficients are drawn from
    ``±U(0.5, 2.0)`` and intercepts from ``U(-0.5, 0.5)``."""
    if k < 2:
        raise ValidationError("k must be at least 2")
    if not 0.0 <= density <= 1.0:
        raise ValidationError("density must lie in [0, 1]")
    if isinstance(dists, (str, DistributionKind)):
        dists = [dists] * k
    dists = tuple(DistributionKind.parse(d) for d in dists)
    if len(dists) != k:
        raise ValidationError("need one distribution per node")
    names = tuple(names) if names is not None else tuple(f"x{i + 1}" for i in range(k))
    rng = np.random.default_rng(seed)
    order = rng.permutation(k)
    adj = np.zeros((k, k), dtype=np.int8)
    coefs = {}
    for a in range(k):
        for b in range(a + 1, k):
            parent, child = int(order[a]), int(order[b])
            if rng.random() < density:
                adj[child, parent] = 1
                shape = (_outputs(dists[child]), dists[parent].width)
                mag = rng.uniform(*COEF_BAND, size=shape)
                sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
                coefs[(child, parent)] = mag * sign
    intercepts = tuple(rng.uniform(*INTERCEPT_BAND, size=_outputs(d)) for d in dists)
    sd = tuple(1.0 for _ in dists)
    return GroundTruth(Dag(adj, names), coefs, intercepts, sd, dists)


def topological_order(dag: Dag) -> list[int]:
    a = np.asarray(dag.adjacency) != 0
    indeg = a.sum(axis=1).astype(int)
    order = []
    ready = sorted(j for j in range(dag.k) if indeg[j] == 0)
    while ready:
        v = ready.pop(0)
        order.append(v)
        for c in np.flatnonzero(a[:, v]):
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(int(c))
        ready.sort()
    if len(order) != dag.k:
        raise ValidationError("graph is not acyclic")
    return order


def simulate_data(gt: GroundTruth, n: int, seed: int = 0) -> Dataset:
    """Ancestral sampling of ``n`` rows in topological order.

    Raises :class:`~abnmle.errors.LevelMismatch` if a categorical column
    happens not to show every level (increase ``n``).
    """
    if n < 1:
        raise ValidationError("n must be positive")
    rng = np.random.default_rng(seed)
    k = gt.k
    values = np.zeros((n, k))
    encoded: dict[int, np.ndarray] = {}
    for j in topological_order(gt.dag):
        dist = gt.dists[j]
        eta = np.tile(gt.intercepts[j], (n, 1))
        for p in gt.dag.parents(j):
            eta += encoded[p] @ gt.coefficients[(j, p)].T
        if dist.kind == "gaussian":
            col = eta[:, 0] + gt.gaussian_sd[j] * rng.standard_normal(n)
        elif dist.kind == "binomial":
            col = (rng.random(n) < expit(eta[:, 0])).astype(float)
        elif dist.kind == "poisson":
            col = rng.poisson(np.exp(np.clip(eta[:, 0], -POISSON_CLAMP, POISSON_CLAMP))).astype(float)
        else:
            prob = softmax(np.hstack([np.zeros((n, 1)), eta]), axis=1)
            u = rng.random(n)[:, None]
            col = np.minimum((u > np.cumsum(prob, axis=1)).sum(axis=1), dist.levels - 1).astype(float)
        values[:, j] = col
        if dist.kind == "multinomial":
            encoded[j] = (col[:, None] == np.arange(1, dist.levels)[None, :]).astype(float)
        else:
            encoded[j] = col[:, None]
    return Dataset(gt.dag.node_names, values, gt.dists)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    mode: str = "directed"

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "mode": self.mode}


def confusion(learned: Dag, truth: Dag, mode: str = "directed") -> ConfusionCounts:
    if learned.node_names != truth.node_names:
        raise NodeMismatch("learned and true DAGs have different nodes")
    L = np.asarray(learned.adjacency) != 0
    T = np.asarray(truth.adjacency) != 0
    if mode == "skeleton":
        upper = np.triu(np.ones(L.shape, dtype=bool), 1)
        L = (L | L.T) & upper
        T = (T | T.T) & upper
    elif mode != "directed":
        raise ValidationError(f"unknown comparison mode {mode!r}")
    return ConfusionCounts(int((L & T).sum()), int((L & ~T).sum()), int((~L & T).sum()), mode)

