"""Replicated simulation experiments: score recovery and coefficient error."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cache import SCORE_KINDS, build_cache
from .data import ConstraintSpec
from .network import fit_dag
from .search import most_probable_dag
from .simulation import confusion, random_dag, simulate_data


@dataclass(frozen=True)
class RecoveryRow:
    density: float
    n: int
    replicate: int
    score: str
    tp: int
    fp: int
    fn: int
    arcs: int
    true_arcs: int


def _data_seed(seed: int, replicate: int, n: int) -> list[int]:
    return [seed, replicate, n]


def score_recovery(
    k: int = 10,
    density: float = 0.2,
    sample_sizes: Sequence[int] = (100, 1000, 10000),
    replicates: int = 20,
    scores: Sequence[str] = SCORE_KINDS,
    dists="gaussian",
    max_parents: int = 4,
    seed: int = 0,
    mode: str = "directed",
    threads: int = 1,
) -> list[RecoveryRow]:
    """TP/FP/FN of the learned structure per (replicate, n, score).

    Replicate ``r`` uses the ground truth drawn with seed ``[seed, r]``; one
    cache per (replicate, n) is shared by all scores.
    """
    rows = []
    for r in range(replicates):
        gt = random_dag(k, density, dists, seed=np.random.SeedSequence([seed, r]).generate_state(1)[0])
        for n in sample_sizes:
            ds = simulate_data(gt, n, seed=_data_seed(seed, r, n))
            cache = build_cache(ds, ConstraintSpec.empty(k, max_parents), threads=threads)
            for score in scores:
                dag, _ = most_probable_dag(cache, score)
                cc = confusion(dag, gt.dag, mode)
                rows.append(RecoveryRow(density, n, r, score, cc.tp, cc.fp, cc.fn, dag.n_arcs,
                                        gt.dag.n_arcs))
    return rows


def coefficient_rmse(
    k: int = 10,
    density: float = 0.2,
    sample_sizes: Sequence[int] = (100, 1000, 10000),
    replicates: int = 20,
    seed: int = 0,
) -> dict[int, float]:
    """Mean over replicates of the max-over-nodes RMSE of arc coefficients.

    Each replicate fits the true DAG by maximum likelihood on gaussian data
    simulated from it; replicates without any arc are skipped.
    """
    per_n: dict[int, list[float]] = {n: [] for n in sample_sizes}
    for r in range(replicates):
        gt = random_dag(k, density, "gaussian", seed=np.random.SeedSequence([seed, r]).generate_state(1)[0])
        if gt.dag.n_arcs == 0:
            continue
        for n in sample_sizes:
            ds = simulate_data(gt, n, seed=_data_seed(seed, r, n))
            fr = fit_dag(gt.dag, ds)
            worst = 0.0
            for j, rec in enumerate(fr.nodes):
                parents = gt.dag.parents(j)
                if not parents:
                    continue
                est = dict(zip(rec.labels, rec.estimates))
                err = [est[gt.dag.node_names[p]] - gt.coefficients[(j, p)][0, 0] for p in parents]
                worst = max(worst, float(np.sqrt(np.mean(np.square(err)))))
            per_n[n].append(worst)
    return {n: float(np.mean(v)) for n, v in per_n.items()}


def summarize(rows: Sequence[RecoveryRow]) -> list[dict]:
    """Per (score, n) means and variances of tp/fp/fn."""
    out = []
    keys = sorted({(r.score, r.n) for r in rows}, key=lambda t: (SCORE_KINDS.index(t[0]), t[1]))
    for score, n in keys:
        sel = [r for r in rows if r.score == score and r.n == n]
        rec = {"score": score, "n": n, "replicates": len(sel)}
        for f in ("tp", "fp", "fn", "arcs"):
            vals = np.array([getattr(r, f) for r in sel], dtype=float)
            rec[f"{f}_mean"] = float(vals.mean())
            rec[f"{f}_var"] = float(vals.var(ddof=1)) if len(vals) > 1 else 0.0
        out.append(rec)
    return out


def timed(fn, repetitions: int) -> np.ndarray:
    out = np.empty(repetitions)
    for i in range(repetitions):
        t0 = time.perf_counter()
        fn()
        out[i] = time.perf_counter() - t0
    return out
