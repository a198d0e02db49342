"""Command-line pipeline: buildcache -> search -> fit, plus simulate/evaluate/bench.

Exit codes: 0 success, 1 invalid input, 2 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cache import SCORE_KINDS, ScoreCache, build_cache, check_score_kind
from .data import (
    ConstraintSpec,
    DistributionKind,
    dist_spec_json,
    encode_design,
    load_dataset,
    parse_dist_spec,
    read_constraint_csv,
)
from .errors import UsageError, Unfittable, ValidationError
from .experiments import score_recovery, summarize, timed
from .glm import FamilySpec, fit_node_robust
from .network import fit_dag
from .search import Dag, most_probable_dag
from .simulation import confusion, random_dag, simulate_data

log = logging.getLogger("abnmle")


@dataclass
class RunConfig:
    data_path: Path | None = None
    dist_path: Path | None = None
    ban_path: Path | None = None
    retain_path: Path | None = None
    adjust: list[str] = field(default_factory=list)
    max_parents: int = 5
    score: str = "bic"
    seed: int = 0
    threads: int = 1
    output_dir: Path = Path(".")

    def __post_init__(self):
        if self.max_parents < 1:
            raise UsageError("--max-parents must be >= 1")
        if self.threads < 1:
            raise UsageError("--threads must be >= 1")
        check_score_kind(self.score)
        for flag, p in (("--data", self.data_path), ("--dists", self.dist_path),
                        ("--ban", self.ban_path), ("--retain", self.retain_path)):
            if p is not None and not Path(p).is_file():
                raise UsageError(f"{flag}: cannot read {p}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _comma(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _comma_ints(text: str) -> list[int]:
    try:
        return [int(t) for t in _comma(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data", type=Path, help="dataset CSV")
    common.add_argument("--dists", help="distribution spec JSON (simulate: kind or comma list)")
    common.add_argument("--ban", type=Path, help="ban matrix CSV (row = child)")
    common.add_argument("--retain", type=Path, help="retain matrix CSV (row = child)")
    common.add_argument("--adjust", type=_comma, default=[], help="comma list of adjustment columns")
    common.add_argument("--max-parents", type=int, default=5)
    common.add_argument("--score", default="bic", choices=SCORE_KINDS)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="abnmle", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("buildcache", parents=[common], help="score every licit parent set")

    s = sub.add_parser("search", parents=[common], help="exact search for the optimal DAG")
    s.add_argument("--cache", type=Path, help="score cache CSV (built from --data if absent)")

    f = sub.add_parser("fit", parents=[common], help="fit a given DAG")
    f.add_argument("--dag", type=Path, required=True, help="DAG adjacency CSV")
    f.add_argument("--pvalue-adjust", choices=("none", "bonferroni"), default="none")

    m = sub.add_parser("simulate", parents=[common], help="simulate a ground truth and data")
    m.add_argument("--k", type=int, default=10)
    m.add_argument("--density", type=float, default=0.2)
    m.add_argument("--n", type=int, default=1000)

    e = sub.add_parser("evaluate", parents=[common], help="compare learned and true DAGs")
    e.add_argument("--learned", type=Path)
    e.add_argument("--truth", type=Path)
    e.add_argument("--mode", choices=("directed", "skeleton"), default="directed")
    e.add_argument("--replicates", type=int, help="run the replicated recovery experiment")
    e.add_argument("--sample-sizes", type=_comma_ints, default=[100, 1000, 10000])
    e.add_argument("--k", type=int, default=10)
    e.add_argument("--density", type=float, default=0.2)

    b = sub.add_parser("bench", parents=[common], help="time GLM fits and cache builds")
    b.add_argument("--replicates", type=int, default=50)
    b.add_argument("--k", type=int, default=10)
    b.add_argument("--n", type=int, default=10000)
    b.add_argument("--density", type=float, default=0.2)
    return p


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="")
    log.info("wrote %s", path)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _config(args) -> RunConfig:
    return RunConfig(
        data_path=args.data,
        dist_path=Path(args.dists) if args.dists and args.command not in ("simulate", "evaluate", "bench") else None,
        ban_path=args.ban,
        retain_path=args.retain,
        adjust=list(args.adjust),
        max_parents=args.max_parents,
        score=args.score,
        seed=args.seed,
        threads=args.threads,
        output_dir=args.out,
    )


def _load_inputs(cfg: RunConfig):
    if cfg.data_path is None or cfg.dist_path is None:
        raise UsageError("--data and --dists are required")
    dists = parse_dist_spec(cfg.dist_path.read_text(encoding="utf-8"))
    ds = load_dataset(cfg.data_path.read_text(encoding="utf-8"), dists)
    for a in cfg.adjust:
        ds.index(a)
    k = ds.k
    ban = read_constraint_csv(cfg.ban_path.read_text(encoding="utf-8"), ds.names) if cfg.ban_path else np.zeros((k, k), int)
    retain = (read_constraint_csv(cfg.retain_path.read_text(encoding="utf-8"), ds.names)
              if cfg.retain_path else np.zeros((k, k), int))
    return ds, ConstraintSpec(ban, retain, tuple(cfg.adjust), cfg.max_parents)


def _cmd_buildcache(args, cfg):
    ds, cs = _load_inputs(cfg)
    cache = build_cache(ds, cs, threads=cfg.threads)
    _write(cfg.output_dir / "cache.csv", cache.to_csv())


def _cmd_search(args, cfg):
    t0 = time.perf_counter()
    if args.cache is not None:
        if not args.cache.is_file():
            raise UsageError(f"--cache: cannot read {args.cache}")
        cache = ScoreCache.from_csv(args.cache.read_text(encoding="utf-8"))
    else:
        ds, cs = _load_inputs(cfg)
        cache = build_cache(ds, cs, threads=cfg.threads)
        _write(cfg.output_dir / "cache.csv", cache.to_csv())
    dag, total = most_probable_dag(cache, cfg.score)
    runtime = time.perf_counter() - t0
    _write(cfg.output_dir / "dag.csv", dag.to_csv())
    _write(cfg.output_dir / "dag.dot", dag.to_dot())
    _write(cfg.output_dir / "search.json", _dump({
        "score": cfg.score,
        "total": total,
        "n_arcs": dag.n_arcs,
        "cache_entries": len(cache),
        "runtime_seconds": runtime,
    }))


def _cmd_fit(args, cfg):
    ds, cs = _load_inputs(cfg)
    if not args.dag.is_file():
        raise UsageError(f"--dag: cannot read {args.dag}")
    dag = Dag.from_csv(args.dag.read_text(encoding="utf-8"))
    fr = fit_dag(dag, ds, cs, args.pvalue_adjust)
    _write(cfg.output_dir / "fit.json", fr.to_json())


def _sim_dists(text: str | None, k: int) -> list[DistributionKind]:
    kinds = _comma(text or "gaussian")
    out = []
    for t in kinds:
        if t.startswith("multinomial"):
            _, _, lv = t.partition(":")
            out.append(DistributionKind("multinomial", int(lv or 3)))
        else:
            out.append(DistributionKind(t))
    if len(out) == 1:
        out = out * k
    if len(out) != k:
        raise UsageError(f"--dists: need 1 or {k} kinds, got {len(out)}")
    return out


def _cmd_simulate(args, cfg):
    if args.k < 2 or args.n < 1:
        raise UsageError("--k must be >= 2 and --n >= 1")
    dists = _sim_dists(args.dists, args.k)
    gt = random_dag(args.k, args.density, dists, seed=cfg.seed)
    ds = simulate_data(gt, args.n, seed=[cfg.seed, 1])
    out = cfg.output_dir
    _write(out / "truth.csv", gt.dag.to_csv())
    _write(out / "truth.json", gt.to_json())
    _write(out / "data.csv", ds.to_csv())
    _write(out / "dists.json", dist_spec_json(ds.dist_spec()))


def _cmd_evaluate(args, cfg):
    out = cfg.output_dir
    if args.replicates:
        rows = score_recovery(
            k=args.k, density=args.density, sample_sizes=args.sample_sizes,
            replicates=args.replicates, dists=_sim_dists(args.dists, args.k),
            max_parents=cfg.max_parents, seed=cfg.seed, mode=args.mode, threads=cfg.threads,
        )
        _write(out / "recovery.csv", _table([asdict(r) for r in rows]))
        _write(out / "recovery_summary.csv", _table(summarize(rows)))
        return
    if args.learned is None or args.truth is None:
        raise UsageError("--learned and --truth are required (or use --replicates)")
    for flag, p in (("--learned", args.learned), ("--truth", args.truth)):
        if not p.is_file():
            raise UsageError(f"{flag}: cannot read {p}")
    learned = Dag.from_csv(args.learned.read_text(encoding="utf-8"))
    truth = Dag.from_csv(args.truth.read_text(encoding="utf-8"))
    cc = confusion(learned, truth, args.mode)
    _write(out / "confusion.json", _dump(cc.to_dict()))


def _table(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()


def _cmd_bench(args, cfg):
    reps = args.replicates
    if reps < 1:
        raise UsageError("--replicates must be >= 1")
    gt = random_dag(args.k, args.density, "gaussian", seed=cfg.seed)
    ds = simulate_data(gt, args.n, seed=[cfg.seed, 1])
    rng = np.random.default_rng(cfg.seed)
    X, y = encode_design(ds, 0, range(1, min(ds.k, 5)))
    eta = X.values @ np.r_[0.2, rng.uniform(-0.3, 0.3, X.p - 1)] / max(1.0, float(np.abs(X.values[:, 1:]).std()))
    y_bin = (rng.random(ds.n) < 1 / (1 + np.exp(-eta))).astype(float)
    y_poi = rng.poisson(np.exp(np.clip(eta, -5, 5))).astype(float)
    tasks = {
        "glm_gaussian": lambda: fit_node_robust(X, y, FamilySpec("gaussian")),
        "glm_binomial": lambda: fit_node_robust(X, y_bin, FamilySpec("binomial")),
        "glm_poisson": lambda: fit_node_robust(X, y_poi, FamilySpec("poisson")),
        "cache_build": lambda: build_cache(ds, ConstraintSpec.empty(ds.k, cfg.max_parents), threads=cfg.threads),
    }
    rows = []
    for name, fn in tasks.items():
        t = timed(fn, reps)
        q1, med, q3 = np.percentile(t, [25, 50, 75])
        rows.append({"task": name, "repetitions": reps, "median_s": float(med),
                     "q1_s": float(q1), "q3_s": float(q3), "n": ds.n, "k": ds.k})
        log.info("%s: median %.4fs", name, med)
    _write(cfg.output_dir / "bench.csv", _table(rows))


COMMANDS = {
    "buildcache": _cmd_buildcache,
    "search": _cmd_search,
    "fit": _cmd_fit,
    "simulate": _cmd_simulate,
    "evaluate": _cmd_evaluate,
    "bench": _cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        COMMANDS[args.command](args, _config(args))
    except (ValidationError, Unfittable, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
