"""Datasets, distribution tags, expert constraints and design-matrix encoding."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    IllegalParent,
    LevelMismatch,
    MissingSpec,
    MissingValue,
    UnknownColumn,
    ValidationError,
)

KINDS = ("gaussian", "binomial", "poisson", "multinomial")
INTERCEPT = "(Intercept)"


@dataclass(frozen=True)
class DistributionKind:
    kind: str
    levels: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown distribution {self.kind!r}")
        if self.kind == "multinomial":
            if self.levels is None or int(self.levels) < 3:
                raise ValidationError("multinomial needs levels >= 3")
        elif self.levels is not None:
            if not (self.kind == "binomial" and self.levels == 2):
                raise ValidationError(f"levels given for {self.kind}")
            object.__setattr__(self, "levels", None)

    @property
    def categorical(self) -> bool:
        return self.kind in ("binomial", "multinomial")

    @property
    def n_levels(self) -> int | None:
        if self.kind == "binomial":
            return 2
        return self.levels

    @property
    def width(self) -> int:
        """Number of design columns this variable contributes as a covariate."""
        return self.levels - 1 if self.kind == "multinomial" else 1

    @classmethod
    def parse(cls, obj) -> "DistributionKind":
        if isinstance(obj, DistributionKind):
            return obj
        if isinstance(obj, str):
            return cls(obj)
        if isinstance(obj, Mapping) and len(obj) == 1 and "multinomial" in obj:
            return cls("multinomial", int(obj["multinomial"]))
        raise ValidationError(f"cannot parse distribution spec {obj!r}")

    def to_json(self):
        if self.kind == "multinomial":
            return {"multinomial": self.levels}
        return self.kind


def parse_dist_spec(spec: str | Mapping) -> dict[str, DistributionKind]:
    """Read the JSON distribution spec (text or already-decoded mapping)."""
    if isinstance(spec, str):
        try:
            spec = json.loads(spec)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"distribution spec is not valid JSON: {exc}") from None
    if not isinstance(spec, Mapping):
        raise ValidationError("distribution spec must be a JSON object")
    return {str(k): DistributionKind.parse(v) for k, v in spec.items()}


def dist_spec_json(dists: Mapping[str, DistributionKind]) -> str:
    return json.dumps({k: v.to_json() for k, v in dists.items()}, indent=2) + "\n"


def _sorted_levels(values: Iterable[str]) -> list[str]:
    distinct = set(values)
    try:
        return sorted(distinct, key=float)
    except ValueError:
        return sorted(distinct)


def _format_number(x: float) -> str:
    if float(x).is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Validated observational data.

    ``data`` is an n-by-k float array; categorical columns hold level indices
    and ``labels[j]`` keeps the original level strings in sorted order.
    """

    names: tuple[str, ...]
    data: np.ndarray
    dists: tuple[DistributionKind, ...]
    labels: tuple[tuple[str, ...] | None, ...] = field(default=())

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim != 2:
            raise ValidationError("data must be two-dimensional")
        names = tuple(str(x) for x in self.names)
        dists = tuple(DistributionKind.parse(d) for d in self.dists)
        n, k = data.shape
        if n < 1:
            raise ValidationError("dataset has no rows")
        if len(names) != k or len(dists) != k:
            raise ValidationError("names/dists length does not match column count")
        if len(set(names)) != k:
            raise ValidationError("column names must be unique")
        if np.isnan(data).any():
            raise MissingValue("dataset contains missing values")
        labels = tuple(self.labels) if self.labels else (None,) * k
        fixed = []
        for j, (name, dist) in enumerate(zip(names, dists)):
            col = data[:, j]
            if not np.isfinite(col).all():
                raise ValidationError(f"column {name!r} has non-finite values")
            if dist.kind == "poisson":
                if (col < 0).any() or (col != np.round(col)).any():
                    raise LevelMismatch(f"poisson column {name!r} must hold non-negative integers")
            if dist.categorical:
                c = dist.n_levels
                observed = np.unique(col)
                if len(observed) != c or not np.array_equal(observed, np.arange(c)):
                    raise LevelMismatch(
                        f"column {name!r} declared {dist.kind} with {c} levels "
                        f"but observed {len(observed)} distinct values"
                    )
                lab = labels[j] if labels[j] is not None else tuple(str(i) for i in range(c))
                if len(lab) != c:
                    raise ValidationError(f"column {name!r} has {len(lab)} labels for {c} levels")
                fixed.append(tuple(lab))
            else:
                fixed.append(None)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "dists", dists)
        object.__setattr__(self, "labels", tuple(fixed))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def k(self) -> int:
        return self.data.shape[1]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownColumn(f"no column named {name!r}") from None

    def column(self, j: int) -> np.ndarray:
        return self.data[:, j]

    @cached_property
    def _blocks(self) -> list[tuple[np.ndarray, tuple[str, ...]]]:
        # Covariate encoding of every column, computed once per dataset.
        out = []
        for j, (name, dist) in enumerate(zip(self.names, self.dists)):
            col = self.data[:, j]
            if dist.kind == "multinomial":
                levels = np.arange(1, dist.levels)
                block = (col[:, None] == levels[None, :]).astype(float)
                labs = tuple(f"{name}[{self.labels[j][lv]}]" for lv in levels)
            else:
                block = col[:, None]
                labs = (name,)
            out.append((block, labs))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.names)
        cols = []
        for j, dist in enumerate(self.dists):
            col = self.data[:, j]
            if dist.categorical:
                cols.append([self.labels[j][int(v)] for v in col])
            else:
                cols.append([_format_number(v) for v in col])
        for row in zip(*cols):
            w.writerow(row)
        return buf.getvalue()

    def dist_spec(self) -> dict[str, DistributionKind]:
        return dict(zip(self.names, self.dists))


def load_dataset(csv_text: str, dist_spec: Mapping[str, DistributionKind | str | dict]) -> Dataset:
    """Parse CSV text into a validated ``Dataset``.

    Binomial and multinomial columns are recoded to level indices following
    the sorted order of their distinct values (numeric order when every value
    parses as a number, string order otherwise).
    """
    dists = {k: DistributionKind.parse(v) for k, v in dist_spec.items()}
    rows = list(csv.reader(io.StringIO(csv_text)))
    rows = [r for r in rows if r]
    if not rows:
        raise ValidationError("CSV is empty")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    for h in header:
        if h not in dists:
            raise UnknownColumn(f"column {h!r} has no declared distribution")
    for name in dists:
        if name not in header:
            raise MissingSpec(f"distribution given for {name!r} but the column is absent")
    if len(set(header)) != len(header):
        raise ValidationError("duplicate column names in CSV header")
    if not body:
        raise ValidationError("CSV has no data rows")
    k = len(header)
    for i, r in enumerate(body, start=2):
        if len(r) != k:
            raise ValidationError(f"line {i}: expected {k} fields, found {len(r)}")
    data = np.empty((len(body), k))
    labels = []
    for j, name in enumerate(header):
        raw = [r[j].strip() for r in body]
        if any(v == "" or v.upper() == "NA" for v in raw):
            raise MissingValue(f"column {name!r} has missing values")
        dist = dists[name]
        if dist.categorical:
            levels = _sorted_levels(raw)
            if len(levels) != dist.n_levels:
                raise LevelMismatch(
                    f"column {name!r} declared {dist.kind} with {dist.n_levels} levels "
                    f"but has {len(levels)} distinct values"
                )
            code = {lv: i for i, lv in enumerate(levels)}
            data[:, j] = [code[v] for v in raw]
            labels.append(tuple(levels))
        else:
            try:
                vals = [float(v) for v in raw]
            except ValueError as exc:
                raise LevelMismatch(f"column {name!r}: {exc}") from None
            if dist.kind == "poisson" and any(v < 0 or not float(v).is_integer() for v in vals):
                raise LevelMismatch(f"poisson column {name!r} must hold non-negative integers")
            data[:, j] = vals
            labels.append(None)
    return Dataset(tuple(header), data, tuple(dists[h] for h in header), tuple(labels))


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    values: np.ndarray
    column_labels: tuple[str, ...]
    source_terms: dict[str, str]
    dropped: tuple[str, ...] = ()

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def take(self, keep: Sequence[int]) -> "DesignMatrix":
        keep = list(keep)
        removed = tuple(self.column_labels[i] for i in range(self.p) if i not in keep)
        labels = tuple(self.column_labels[i] for i in keep)
        return DesignMatrix(
            self.values[:, keep],
            labels,
            {lab: self.source_terms[lab] for lab in labels},
            self.dropped + removed,
        )


def as_design(X) -> DesignMatrix:
    if isinstance(X, DesignMatrix):
        return X
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    labels = (INTERCEPT,) + tuple(f"x{i}" for i in range(1, X.shape[1]))
    return DesignMatrix(X, labels, {lab: lab for lab in labels})


def encode_design(
    ds: Dataset, child: int, parents: Iterable[int], adjust: Iterable[int] = ()
) -> tuple[DesignMatrix, np.ndarray]:
    """Design matrix (intercept, parents ascending, adjusters ascending) and response."""
    parents = sorted(set(int(p) for p in parents))
    adjust = sorted(set(int(a) for a in adjust))
    for idx in [child, *parents, *adjust]:
        if not 0 <= idx < ds.k:
            raise IllegalParent(f"variable index {idx} out of range 0..{ds.k - 1}")
    if child in parents:
        raise IllegalParent(f"{ds.names[child]!r} cannot be its own parent")
    if child in adjust:
        raise IllegalParent(f"{ds.names[child]!r} is an adjustment variable and cannot be a child")
    if set(parents) & set(adjust):
        raise IllegalParent("parents and adjustment variables overlap")
    blocks = [np.ones((ds.n, 1))]
    labels = [INTERCEPT]
    sources = {INTERCEPT: INTERCEPT}
    for j in parents + adjust:
        block, labs = ds._blocks[j]
        blocks.append(block)
        labels.extend(labs)
        sources.update({lab: ds.names[j] for lab in labs})
    values = np.hstack(blocks) if len(blocks) > 1 else blocks[0]
    y = ds.data[:, child]
    if ds.dists[child].categorical:
        y = y.astype(int)
    return DesignMatrix(values, tuple(labels), sources), y


@dataclass(frozen=True, eq=False)
class ConstraintSpec:
    """Ban/retain matrices over all dataset columns (row = child, column = parent)."""

    ban: np.ndarray
    retain: np.ndarray
    adjust: tuple[str, ...] = ()
    max_parents: int = 5

    def __post_init__(self):
        ban = np.asarray(self.ban, dtype=int)
        retain = np.asarray(self.retain, dtype=int)
        ban.setflags(write=False)
        retain.setflags(write=False)
        object.__setattr__(self, "ban", ban)
        object.__setattr__(self, "retain", retain)
        object.__setattr__(self, "adjust", tuple(self.adjust))

    @classmethod
    def empty(cls, k: int, max_parents: int = 5, adjust: Sequence[str] = ()) -> "ConstraintSpec":
        z = np.zeros((k, k), dtype=int)
        return cls(z, z.copy(), tuple(adjust), max_parents)

    def node_indices(self, ds: Dataset) -> list[int]:
        adj = {ds.index(a) for a in self.adjust}
        return [j for j in range(ds.k) if j not in adj]

    def restrict(self, idx: Sequence[int]) -> "ConstraintSpec":
        """Constraints over the sub-network ``idx`` (adjustment variables removed)."""
        ix = np.ix_(idx, idx)
        return ConstraintSpec(self.ban[ix], self.retain[ix], (), self.max_parents)


@dataclass(frozen=True)
class Violation:
    kind: str
    row: int | None = None
    col: int | None = None
    detail: str = ""

    def __str__(self):
        where = "" if self.row is None else f" at ({self.row},{self.col})"
        return f"{self.kind}{where}: {self.detail}" if self.detail else f"{self.kind}{where}"


def validate_constraints(cs: ConstraintSpec, ds: Dataset | None = None) -> list[Violation]:
    out: list[Violation] = []
    ban, retain = cs.ban, cs.retain
    if ban.ndim != 2 or ban.shape[0] != ban.shape[1] or ban.shape != retain.shape:
        return [Violation("ShapeMismatch", detail=f"ban {ban.shape}, retain {retain.shape}")]
    k = ban.shape[0]
    if ds is not None and k != ds.k:
        out.append(Violation("ShapeMismatch", detail=f"matrices are {k}x{k}, dataset has k={ds.k}"))
        return out
    for name, m in (("ban", ban), ("retain", retain)):
        bad = np.argwhere((m != 0) & (m != 1))
        out += [Violation("NonBinary", int(r), int(c), name) for r, c in bad]
        out += [Violation("Diagonal", i, i, name) for i in range(k) if m[i, i]]
    out += [Violation("Conflict", int(r), int(c)) for r, c in np.argwhere((ban == 1) & (retain == 1))]
    if cs.max_parents < 1:
        out.append(Violation("MaxParents", detail=f"max_parents={cs.max_parents} must be >= 1"))
    for i in range(k):
        off = retain[i].copy()
        off[i] = 0
        if off.sum() > cs.max_parents:
            out.append(Violation("RetainOverflow", i, None, f"{int(off.sum())} retained > max_parents"))
    if ds is not None:
        for a in cs.adjust:
            if a not in ds.names:
                out.append(Violation("UnknownAdjust", detail=a))
                continue
            j = ds.index(a)
            if retain[j].any() or retain[:, j].any():
                out.append(Violation("AdjustInStructure", j, None, f"{a!r} appears in retain"))
    return out


def read_constraint_csv(text: str, names: Sequence[str]) -> np.ndarray:
    """Adjacency CSV (header row and first column of names) aligned to ``names``."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows:
        raise ValidationError("constraint matrix CSV is empty")
    cols = [c.strip() for c in rows[0][1:]]
    m = np.zeros((len(names), len(names)), dtype=int)
    pos = {n: i for i, n in enumerate(names)}
    for c in cols:
        if c not in pos:
            raise UnknownColumn(f"constraint matrix column {c!r} is not in the dataset")
    for r in rows[1:]:
        child = r[0].strip()
        if child not in pos:
            raise UnknownColumn(f"constraint matrix row {child!r} is not in the dataset")
        for c, v in zip(cols, r[1:]):
            v = v.strip()
            try:
                val = int(float(v)) if v else 0
            except ValueError:
                raise ValidationError(f"constraint cell ({child},{c}) = {v!r} is not 0/1") from None
            m[pos[child], pos[c]] = val
    return m


def write_adjacency_csv(m: np.ndarray, names: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["", *names])
    for name, row in zip(names, np.asarray(m, dtype=int)):
        w.writerow([name, *(str(int(v)) for v in row)])
    return buf.getvalue()

