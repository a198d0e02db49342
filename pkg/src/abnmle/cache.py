"""Cache of decomposable node scores over all licit (child, parent set) pairs."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from math import comb

from .data import ConstraintSpec, Dataset, encode_design, validate_constraints
from .errors import ConstraintConflict, Unfittable, ValidationError
from .glm import FamilySpec, fit_node_robust

SCORE_KINDS = ("mlik", "aic", "bic", "mdl")
# +1: larger is better, -1: smaller is better.
DIRECTION = {"mlik": 1, "aic": -1, "bic": -1, "mdl": -1}


def check_score_kind(kind: str) -> str:
    if kind not in SCORE_KINDS:
        raise ValidationError(f"unknown score {kind!r}; choose from {', '.join(SCORE_KINDS)}")
    return kind


def node_scores(loglik: float, d: int, n: int, k: int, n_parents: int) -> tuple[float, float, float, float]:
    """Return ``(mlik, aic, bic, mdl)`` for one node model.

    AIC, BIC and MDL are losses; ``mlik`` is the log-likelihood itself.
    """
    if d < 1 or n < 1 or k < 1 or n_parents < 0:
        raise ValidationError(f"invalid score arguments d={d}, n={n}, k={k}, n_parents={n_parents}")
    aic = -loglik + 2 * d
    bic = -loglik + d / 2 * math.log(n)
    mdl = bic + (1 + n_parents) * math.log(k)
    return loglik, aic, bic, mdl


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def mask_members(mask: int) -> list[int]:
    return [i for i in range(mask.bit_length()) if mask >> i & 1]


@dataclass(frozen=True)
class CacheEntry:
    child: int
    parents: int
    loglik: float
    d: int
    n_parents: int
    aic: float
    bic: float
    mdl: float
    method: str

    @property
    def mlik(self) -> float:
        return self.loglik

    def score(self, kind: str) -> float:
        return getattr(self, kind)

    def loss(self, kind: str) -> float:
        """Score oriented so that smaller is better."""
        return -DIRECTION[kind] * getattr(self, kind)


def enumerate_parent_sets(k: int, max_parents: int, cs: ConstraintSpec | None = None) -> list[list[int]]:
    """Licit parent bitmasks per child, ascending."""
    if cs is None:
        cs = ConstraintSpec.empty(k, max_parents)
    violations = validate_constraints(ConstraintSpec(cs.ban, cs.retain, (), max_parents))
    if violations:
        raise ConstraintConflict("; ".join(str(v) for v in violations))
    if cs.ban.shape != (k, k):
        raise ConstraintConflict(f"constraint matrices must be {k}x{k}")
    out = []
    for j in range(k):
        retained = [i for i in range(k) if i != j and cs.retain[j, i]]
        free = [i for i in range(k) if i != j and not cs.ban[j, i] and not cs.retain[j, i]]
        base = sum(1 << i for i in retained)
        masks = []
        for m in range(0, max_parents - len(retained) + 1):
            for extra in combinations(free, m):
                masks.append(base | sum(1 << i for i in extra))
        out.append(sorted(masks))
    return out


def expected_count(k: int, max_parents: int, retained: int, banned: int) -> int:
    free = k - 1 - retained - banned
    return sum(comb(free, m - retained) for m in range(retained, max_parents + 1) if m - retained <= free)


@dataclass(frozen=True, eq=False)
class ScoreCache:
    node_names: tuple[str, ...]
    entries: tuple[tuple[CacheEntry, ...], ...]
    n: int
    max_parents: int
    constraints: ConstraintSpec | None = None

    @property
    def k(self) -> int:
        return len(self.node_names)

    def __len__(self) -> int:
        return sum(len(e) for e in self.entries)

    def __iter__(self):
        for per_child in self.entries:
            yield from per_child

    def lookup(self, child: int, parents: int) -> CacheEntry | None:
        for e in self.entries[child]:
            if e.parents == parents:
                return e
        return None

    def parent_names(self, mask: int) -> list[str]:
        return [self.node_names[i] for i in mask_members(mask)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["child", "parents", "loglik", "d", "aic", "bic", "mdl", "method"])
        for e in self:
            w.writerow([
                self.node_names[e.child],
                ";".join(self.parent_names(e.parents)),
                repr(float(e.loglik)),
                e.d,
                repr(float(e.aic)),
                repr(float(e.bic)),
                repr(float(e.mdl)),
                e.method,
            ])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, n: int | None = None, max_parents: int | None = None) -> "ScoreCache":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValidationError("score cache CSV has no rows")
        names: list[str] = []
        for r in rows:
            if r["child"] not in names:
                names.append(r["child"])
        pos = {nm: i for i, nm in enumerate(names)}
        per_child: list[list[CacheEntry]] = [[] for _ in names]
        for r in rows:
            parents = [p for p in r["parents"].split(";") if p]
            for p in parents:
                if p not in pos:
                    raise ValidationError(f"cache parent {p!r} is never a child")
            mask = sum(1 << pos[p] for p in parents)
            child = pos[r["child"]]
            per_child[child].append(CacheEntry(
                child, mask, float(r["loglik"]), int(r["d"]), len(parents),
                float(r["aic"]), float(r["bic"]), float(r["mdl"]), r["method"],
            ))
        entries = tuple(tuple(sorted(e, key=lambda x: x.parents)) for e in per_child)
        mp = max_parents if max_parents is not None else max(e.n_parents for pc in entries for e in pc)
        return cls(tuple(names), entries, n or 0, mp)


def _fit_child(args) -> list[CacheEntry]:
    ds, child, node_idx, adjust_idx, masks, k = args
    dist = ds.dists[node_idx[child]]
    fam = FamilySpec.of(dist)
    out = []
    for mask in masks:
        parents = [node_idx[i] for i in mask_members(mask)]
        X, y = encode_design(ds, node_idx[child], parents, adjust_idx)
        try:
            fit = fit_node_robust(X, y, fam, dist.levels)
        except Unfittable as exc:
            names = [ds.names[p] for p in parents]
            raise Unfittable(f"node {ds.names[node_idx[child]]!r} with parents {names}: {exc}") from None
        n_par = popcount(mask)
        _, aic, bic, mdl = node_scores(fit.loglik, fit.d, ds.n, k, n_par)
        out.append(CacheEntry(child, mask, float(fit.loglik), fit.d, n_par, aic, bic, mdl, fit.method))
    return out


def build_cache(ds: Dataset, cs: ConstraintSpec | None = None, threads: int = 1) -> ScoreCache:
    """Fit and score every licit (child, parent set) combination.

    Nodes are the non-adjustment columns of ``ds``; adjustment columns enter
    every model as covariates. Work is split per child across ``threads``
    worker processes and merged in child order, so the result does not
    depend on the worker count.
    """
    if cs is None:
        cs = ConstraintSpec.empty(ds.k)
    violations = validate_constraints(cs, ds)
    if violations:
        raise ConstraintConflict("; ".join(str(v) for v in violations))
    node_idx = cs.node_indices(ds)
    adjust_idx = [ds.index(a) for a in cs.adjust]
    k = len(node_idx)
    sub = cs.restrict(node_idx)
    masks = enumerate_parent_sets(k, cs.max_parents, sub)
    jobs = [(ds, j, node_idx, adjust_idx, masks[j], k) for j in range(k)]
    if threads > 1 and k > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_fit_child, jobs))
    else:
        results = [_fit_child(job) for job in jobs]
    names = tuple(ds.names[i] for i in node_idx)
    return ScoreCache(names, tuple(tuple(r) for r in results), ds.n, cs.max_parents, cs)

