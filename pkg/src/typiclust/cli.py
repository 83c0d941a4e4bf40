"""Command-line interface.

Exit codes: 0 on success, 2 on invalid input, 3 on numerical failure. Errors
are reported on stderr as a single JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import jsonschema
import numpy as np

from . import evaluation, formats, linear_mixture, theory
from .core import PoolState, StrategyConfig
from .errors import InvalidConfig, TypiclustError, ValidationError
from .strategies import ScoreMatrix, select

log = logging.getLogger("typiclust")

STRATEGY_ALIASES = {"typiclust": "typiclust_rp"}
STRATEGY_CHOICES = ("typiclust", "typiclust_rp", "tpc_rand", "tpc_inv", "tpc_noclust", "random",
                    "uncertainty", "margin", "entropy", "coreset")

ITERATE_SCHEMA = {
    "type": "object",
    "required": ["embeddings", "labels", "strategies", "budgets", "seeds", "output_dir"],
    "additionalProperties": False,
    "properties": {
        "embeddings": {"type": "string"},
        "labels": {"type": "string"},
        "scores": {"type": "string"},
        "n_classes": {"type": "integer", "minimum": 1},
        "normalize": {"type": "boolean"},
        "strategies": {"type": "array", "minItems": 1, "uniqueItems": True,
                       "items": {"type": "string", "enum": list(STRATEGY_CHOICES)}},
        "budgets": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "seeds": {"type": "array", "minItems": 1, "uniqueItems": True,
                  "items": {"type": "integer", "minimum": 0}},
        "probes": {"type": "array", "items": {"type": "string", "enum": list(evaluation.PROBES)}},
        "initial_labeled": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "k_neighbors": {"type": "integer", "minimum": 1},
        "max_clusters": {"type": "integer", "minimum": 1},
        "min_cluster_size": {"type": "integer", "minimum": 1},
        "output_dir": {"type": "string"},
    },
}


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _emit(text: str, out: Optional[str]) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _strategy(name: str) -> str:
    return STRATEGY_ALIASES.get(name, name)


def _grid(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# --------------------------------------------------------------------------
# select
# --------------------------------------------------------------------------

def cmd_select(args) -> int:
    emb = formats.load_embedding_set(args.embeddings, normalize=args.normalize)
    labeled = ()
    if args.labeled:
        y = formats.read_labels(args.labeled, n=emb.n)
        labeled = tuple(int(i) for i in np.flatnonzero(y != -1))
    scores = None
    if args.scores:
        scores = ScoreMatrix(formats.read_scores(args.scores, n=emb.n))
    config = StrategyConfig(kind=_strategy(args.strategy), k_neighbors=args.k,
                            max_clusters=args.max_clusters, min_cluster_size=args.min_cluster_size,
                            seed=args.seed)
    batch = select(emb, PoolState.initial(emb.n, labeled), args.budget, config, scores)
    payload = batch.to_dict()
    payload["warnings"] = list(batch.warnings)
    _emit(_dump_json(payload), args.out)
    return 0


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------

def cmd_phase(args) -> int:
    cfg = theory.MixtureConfig(args.p, args.alpha)
    if args.error == "table":
        if not args.table:
            raise InvalidConfig("--error table needs --table PATH")
        rows = formats.read_csv_rows(args.table, "error table")
        tab = np.array(rows, dtype=np.float64)
        model = theory.TabulatedError(tab[:, 0], tab[:, 1])
    elif args.error == "exp":
        model = theory.make_error_model("exp", k=args.k, nu=args.nu)
    else:
        model = theory.make_error_model("power", c=args.c, q=args.q)
    grid = theory.log_grid(args.m_min, args.m_max, args.grid)
    curves = theory.difference_curves(model, cfg, args.delta, grid)
    comments = []
    for name, curve in (("r1", curves.diff_r1), ("r2", curves.diff_r2)):
        if curves.m.size >= 3:
            rep = theory.detect_transition(curves.m, curve)
            where = ";".join(f"{z!r}" for z in rep.crossings) or "none"
            comments.append(f"sign_changes_{name}={len(rep.crossings)} crossings_{name}={where} "
                            f"initial_sign_{name}={rep.initial_sign}")
    comments.append(f"threshold={cfg.threshold!r} delta={curves.delta!r} trimmed={curves.trimmed}")
    if args.error == "exp":
        comments.append(f"closed_form_crossing={theory.exponential_crossing(cfg, args.nu)!r}")
    text = formats.write_csv(None, ["m", "diff_r1", "diff_r2"], theory.phase_table(curves), comments)
    _emit(text, args.out)
    return 0


def cmd_linear(args) -> int:
    cfg = linear_mixture.LinearMixtureConfig(
        dim=args.dim, p=args.p, alpha=args.alpha, margin_r1=args.margin_r1, margin_r2=args.margin_r2,
        m_grid=args.m_grid, delta_frac=args.delta_frac, repetitions=args.reps,
        test_size=args.test_size, seed=args.seed, calibration_reps=args.calibration_reps)
    res = linear_mixture.mixture_error_experiment(cfg)
    comments = [f"margin_r1={cfg.margin_r1!r} margin_r2={res.margin_r2!r}"]
    if res.alpha_hat is not None:
        comments.append(f"alpha_target={cfg.alpha!r} alpha_hat={res.alpha_hat!r}")
    for mode in ("+delta", "-delta"):
        gain, se = res.paired_gain(mode)
        comments.append(f"paired_gain{mode}=" + ";".join(f"{g!r}" for g in gain))
        comments.append(f"paired_stderr{mode}=" + ";".join(f"{s!r}" for s in se))
    text = formats.write_csv(None, ["m", "delta_mode", "mean_error", "std_error", "repetitions"],
                             res.table(), comments)
    _emit(text, args.out)
    return 0


# --------------------------------------------------------------------------
# evaluate
# --------------------------------------------------------------------------

def _batch_metrics(emb, labeled: Sequence[int], batch: Sequence[int], metrics, probes) -> dict:
    n = emb.n
    for i in list(batch) + list(labeled):
        if not 0 <= i < n:
            raise ValidationError(f"index {i} outside [0, {n})")
    out: dict = {"batch_size": len(batch), "labeled_size": len(labeled)}
    if "tv" in metrics:
        out["tv_batch"] = evaluation.batch_tv(emb, batch) if batch else 0.0
        out["tv_labeled"] = evaluation.batch_tv(emb, labeled) if labeled else 0.0
    if "acc" in metrics:
        out["accuracy"] = {p: evaluation.probe_accuracy(emb, labeled, p) for p in probes}
    return out


def cmd_evaluate(args) -> int:
    emb = formats.load_embedding_set(args.embeddings, args.labels, args.n_classes, args.normalize)
    metrics = args.metric or ["tv", "acc"]
    probes = args.probe or list(evaluation.PROBES)
    if args.batch:
        batch = [int(i) for i in json.loads(Path(args.batch).read_text())["indices"]]
        payload = _batch_metrics(emb, batch, batch, metrics, probes)
    else:
        payload = []
        labeled: list[int] = []
        for line in Path(args.record).read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            batch = [int(i) for i in rec["batch"]]
            labeled += batch
            entry = _batch_metrics(emb, labeled, batch, metrics, probes)
            entry["iteration"] = rec.get("iteration")
            payload.append(entry)
    _emit(_dump_json(payload), args.out)
    return 0


# --------------------------------------------------------------------------
# iterate
# --------------------------------------------------------------------------

def load_iterate_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"config is not valid JSON: {exc}") from None
    try:
        jsonschema.validate(cfg, ITERATE_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InvalidConfig(f"config field {where}: {exc.message}", path=where,
                            schema_path="/".join(str(p) for p in exc.absolute_schema_path)) from None
    base = path.parent
    for key in ("embeddings", "labels", "scores", "output_dir"):
        if key in cfg and not Path(cfg[key]).is_absolute():
            cfg[key] = str(base / cfg[key])
    return cfg


def cmd_iterate(args) -> int:
    cfg = load_iterate_config(args.config)
    emb = formats.load_embedding_set(cfg["embeddings"], cfg["labels"], cfg.get("n_classes"),
                                     cfg.get("normalize", True))
    scores = ScoreMatrix(formats.read_scores(cfg["scores"], n=emb.n)) if "scores" in cfg else None
    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    probes = cfg.get("probes", list(evaluation.PROBES))
    all_records = []
    timing = []
    for name in cfg["strategies"]:
        config = StrategyConfig(kind=_strategy(name), k_neighbors=cfg.get("k_neighbors", 20),
                                max_clusters=cfg.get("max_clusters", 500),
                                min_cluster_size=cfg.get("min_cluster_size", 5))
        records = evaluation.run_experiment(emb, config, cfg["budgets"], probes, cfg["seeds"],
                                            cfg.get("initial_labeled", ()), scores)
        for seed, rec in zip(cfg["seeds"], records):
            lines = [json.dumps(it.to_dict(rec.dataset_digest), sort_keys=True) for it in rec.iterations]
            (out_dir / f"{name}_seed{seed}.jsonl").write_text("".join(line + "\n" for line in lines))
            timing += [(name, seed, it.iteration, it.wall_time) for it in rec.iterations]
        all_records += records
    rows = evaluation.summarize(all_records)
    if rows:
        header = list(rows[0])
        for r in rows[1:]:
            header += [k for k in r if k not in header]
        formats.write_csv(out_dir / "summary.csv", header, [[r.get(k, "") for k in header] for r in rows])
    else:
        formats.write_csv(out_dir / "summary.csv", ["strategy", "iteration"], [])
    if args.timing_log:
        Path(args.timing_log).write_text(
            "".join(f"{n}\t{s}\t{i}\t{t:.6f}\n" for n, s, i, t in timing))
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _add_normalize(p: argparse.ArgumentParser) -> None:
    p.add_argument("--no-normalize", dest="normalize", action="store_false",
                   help="skip L2 normalization of the embeddings")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="typiclust", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", help="choose a batch of examples to label")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--strategy", required=True, choices=STRATEGY_CHOICES)
    p.add_argument("--budget", required=True, type=int)
    p.add_argument("--labeled", help="label file; entries other than -1 mark the labeled set")
    p.add_argument("--scores")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=20, help="neighbours for typicality")
    p.add_argument("--max-clusters", type=int, default=500)
    p.add_argument("--min-cluster-size", type=int, default=5)
    p.add_argument("--out")
    _add_normalize(p)
    p.set_defaults(func=cmd_select)

    sim = sub.add_parser("simulate", help="theory curves and Monte-Carlo experiments")
    simsub = sim.add_subparsers(dest="simulation", required=True)
    ph = simsub.add_parser("phase", help="difference curves of a two-region mixture")
    ph.add_argument("--error", choices=("exp", "power", "table"), default="exp")
    ph.add_argument("--table", help="CSV with columns m, error (for --error table)")
    ph.add_argument("--k", type=float, default=1.0)
    ph.add_argument("--nu", type=float, default=1.0)
    ph.add_argument("--c", type=float, default=1.0)
    ph.add_argument("--q", type=float, default=1.0)
    ph.add_argument("--p", type=float, required=True)
    ph.add_argument("--alpha", type=float, required=True)
    ph.add_argument("--delta", type=float, default=0.01)
    ph.add_argument("--m-min", type=float, default=theory.DEFAULT_GRID[0])
    ph.add_argument("--m-max", type=float, default=theory.DEFAULT_GRID[1])
    ph.add_argument("--grid", type=int, default=theory.DEFAULT_GRID[2])
    ph.add_argument("--out")
    ph.set_defaults(func=cmd_phase)

    ln = simsub.add_parser("linear", help="least-squares mixture learning curves")
    ln.add_argument("--p", type=float, default=0.9)
    ln.add_argument("--alpha", type=float, default=0.2)
    ln.add_argument("--dim", type=int, default=100)
    ln.add_argument("--reps", type=int, default=1000)
    ln.add_argument("--seed", type=int, default=0)
    ln.add_argument("--m-grid", type=_grid, default=linear_mixture.DEFAULT_M_GRID)
    ln.add_argument("--delta-frac", type=float, default=0.5)
    ln.add_argument("--margin-r1", type=float, default=1.0)
    ln.add_argument("--margin-r2", type=float, help="skip calibration and use this margin")
    ln.add_argument("--test-size", type=int, default=10_000)
    ln.add_argument("--calibration-reps", type=int, default=100)
    ln.add_argument("--out")
    ln.set_defaults(func=cmd_linear)

    ev = sub.add_parser("evaluate", help="class balance and probe accuracy of batches")
    ev.add_argument("--embeddings", required=True)
    ev.add_argument("--labels", required=True)
    ev.add_argument("--n-classes", type=int)
    src = ev.add_mutually_exclusive_group(required=True)
    src.add_argument("--record", help="JSONL experiment record")
    src.add_argument("--batch", help="batch JSON written by select")
    ev.add_argument("--probe", action="append", choices=evaluation.PROBES)
    ev.add_argument("--metric", action="append", choices=("tv", "acc"))
    ev.add_argument("--out")
    _add_normalize(ev)
    ev.set_defaults(func=cmd_evaluate)

    it = sub.add_parser("iterate", help="run a multi-iteration experiment from a JSON config")
    it.add_argument("config")
    it.add_argument("--timing-log", help="optional sidecar file for wall-clock times")
    it.set_defaults(func=cmd_iterate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except TypiclustError as exc:
        sys.stderr.write(json.dumps(exc.to_dict(), sort_keys=True, default=str) + "\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": "IOError", "message": str(exc)}, sort_keys=True) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
