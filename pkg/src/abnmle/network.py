"""Fitting a fixed DAG: per-node estimates, Wald tests and network scores."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .cache import check_score_kind, node_scores
from .data import INTERCEPT, ConstraintSpec, Dataset, encode_design
from .errors import CyclicDag, NodeMismatch, ValidationError
from .glm import FamilySpec, GlmFit, fit_node_robust
from .search import Dag, is_acyclic

PVALUE_ADJUSTMENTS = ("none", "bonferroni")


@dataclass
class NodeRecord:
    node: str
    parents: list[str]
    fit: GlmFit
    labels: list[str]
    estimates: np.ndarray
    std_errors: np.ndarray
    scores: dict[str, float]
    p_adjusted: np.ndarray | None = None

    @property
    def z(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.std_errors > 0, self.estimates / self.std_errors, 0.0)

    @property
    def pvalues(self) -> np.ndarray:
        return 2 * norm.sf(np.abs(self.z))


@dataclass
class FitResult:
    nodes: list[NodeRecord]
    n: int
    pvalue_adjustment: str = "none"
    adjust: tuple[str, ...] = field(default=())

    @property
    def k(self) -> int:
        return len(self.nodes)

    def totals(self) -> dict[str, float]:
        return {kind: network_score(self, kind) for kind in ("mlik", "aic", "bic", "mdl")}

    def node(self, name: str) -> NodeRecord:
        for r in self.nodes:
            if r.node == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        out = []
        for r in self.nodes:
            p = r.pvalues
            padj = r.p_adjusted if r.p_adjusted is not None else p
            coefs = [
                {
                    "label": lab,
                    "estimate": float(est),
                    "se": float(se),
                    "z": float(z),
                    "p": float(pv),
                    "p_adjusted": float(pa),
                }
                for lab, est, se, z, pv, pa in zip(r.labels, r.estimates, r.std_errors, r.z, p, padj)
            ]
            out.append({
                "node": r.node,
                "parents": r.parents,
                "method": r.fit.method,
                "dropped_columns": list(r.fit.dropped_columns),
                "coefficients": coefs,
                "loglik": r.fit.loglik,
                "d": r.fit.d,
                "aic": r.scores["aic"],
                "bic": r.scores["bic"],
                "mdl": r.scores["mdl"],
            })
        return {
            "n": self.n,
            "adjust": list(self.adjust),
            "pvalue_adjustment": self.pvalue_adjustment,
            "nodes": out,
            "totals": self.totals(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _flatten(fit: GlmFit) -> tuple[list[str], np.ndarray, np.ndarray]:
    coef = np.asarray(fit.coefficients)
    se = np.asarray(fit.std_errors)
    labels = list(fit.column_labels)
    if coef.ndim == 2:
        levels = range(1, coef.shape[0] + 1)
        labels = [f"{lv}:{lab}" for lv in levels for lab in fit.column_labels]
        return labels, coef.ravel(), se.ravel()
    return labels, coef, se


def _is_intercept(label: str) -> bool:
    return label == INTERCEPT or label.endswith(":" + INTERCEPT)


def fit_dag(
    g: Dag,
    ds: Dataset,
    cs: ConstraintSpec | None = None,
    pvalue_adjustment: str = "none",
) -> FitResult:
    """Fit every node of ``g`` on its parents plus any adjustment covariates.

    With ``pvalue_adjustment="bonferroni"`` each Wald p-value is multiplied by
    the number of non-intercept coefficients in the whole network, capped at 1.
    These p-values ignore that the structure was selected on the same data.
    """
    if pvalue_adjustment not in PVALUE_ADJUSTMENTS:
        raise ValidationError(f"unknown p-value adjustment {pvalue_adjustment!r}")
    if cs is None:
        cs = ConstraintSpec.empty(ds.k)
    node_idx = cs.node_indices(ds)
    adjust_idx = [ds.index(a) for a in cs.adjust]
    names = tuple(ds.names[i] for i in node_idx)
    if tuple(g.node_names) != names:
        raise NodeMismatch(f"DAG nodes {list(g.node_names)} do not match dataset nodes {list(names)}")
    if not is_acyclic(g):
        raise CyclicDag("the supplied graph contains a cycle")
    ban = cs.restrict(node_idx).ban
    hits = np.argwhere((np.asarray(g.adjacency) != 0) & (ban != 0))
    if len(hits):
        c, p = hits[0]
        raise ValidationError(f"arc {names[p]} -> {names[c]} is banned")
    k = len(names)
    records = []
    for j in range(k):
        parents = g.parents(j)
        dist = ds.dists[node_idx[j]]
        X, y = encode_design(ds, node_idx[j], [node_idx[p] for p in parents], adjust_idx)
        fit = fit_node_robust(X, y, FamilySpec.of(dist), dist.levels)
        mlik, aic, bic, mdl = node_scores(fit.loglik, fit.d, ds.n, k, len(parents))
        labels, est, se = _flatten(fit)
        records.append(NodeRecord(
            names[j], [names[p] for p in parents], fit, labels, est, se,
            {"mlik": mlik, "aic": aic, "bic": bic, "mdl": mdl},
        ))
    result = FitResult(records, ds.n, pvalue_adjustment, tuple(cs.adjust))
    if pvalue_adjustment == "bonferroni":
        m = sum(sum(not _is_intercept(lab) for lab in r.labels) for r in records)
        for r in records:
            r.p_adjusted = np.minimum(1.0, r.pvalues * max(m, 1))
    return result


def network_score(fr: FitResult, score_kind: str) -> float:
    check_score_kind(score_kind)
    return math.fsum(r.scores[score_kind] for r in fr.nodes)
