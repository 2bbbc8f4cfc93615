"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 check failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import os
import sys
import time

import numpy as np

from . import dataio, model, optim, rankeval, synthetic
from .charvocab import build_alphabet
from .config import RunConfig, coerce, read_config_file, write_config_file
from .errors import CheckpointError, ConfigError, DataError, EvaluationError
from .features import IdfTable

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3
GRADCHECK_TOL = 1e-5

log = logging.getLogger("csrqa")


class UsageError(Exception):
    pass


class CheckFailed(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------- config

_FLAG_ALIASES = {"lam": ["--lambda"]}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration (defaults: CSR network)")
    g.add_argument("--config", help="key = value file with RunConfig fields")
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        g.add_argument(flag, *_FLAG_ALIASES.get(f.name, []), dest=f"cfg_{f.name}", metavar="VALUE", default=None)
    g.add_argument("--dataset", choices=("trecqa", "wikiqa", "canonical"), default="canonical")


def resolve_config(args) -> RunConfig:
    """Dataset defaults, then the config file, then individual flags."""
    values = {}
    if args.config:
        if not os.path.exists(args.config):
            raise FileNotFoundError(f"no such file: {args.config}")
        values.update(read_config_file(args.config))
    for f in dataclasses.fields(RunConfig):
        raw = getattr(args, f"cfg_{f.name}", None)
        if raw is not None:
            values[f.name] = coerce(f.name, raw)
    return RunConfig.for_dataset(args.dataset, **values).validate()


def _load(path, dataset):
    if path is None:
        raise UsageError("missing dataset path")
    return dataio.load_pairs(path, "wikiqa" if dataset == "wikiqa" else "canonical")


# ----------------------------------------------------------------- commands

def cmd_alphabet(args) -> int:
    lines = build_alphabet().dump_lines()
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_prepare(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    failures = []
    for split in ("train", "dev", "test"):
        path = getattr(args, split)
        if path is None:
            continue
        pairs = _load(path, args.dataset)
        dataio.write_canonical_tsv(pairs, os.path.join(args.out, f"{split}.tsv"))
        stats = dataio.compute_stats(pairs)
        pinned = dataio.PUBLISHED_STATS.get((args.dataset, split))
        decimals = pinned[3] if pinned else 2
        status = "unchecked"
        if pinned and not args.no_verify:
            status = "ok" if stats.matches(*pinned) else "MISMATCH"
            if status != "ok":
                q, n, pct, d = pinned
                failures.append(f"{split}: got {stats.format(d)}, expected {q} {n} {pct:.{d}f}%")
        print(f"{split}\t{stats.format(decimals)}\t{status}")
    if failures:
        for f in failures:
            print(f"error: split statistics differ from the published ones: {f}", file=sys.stderr)
        raise CheckFailed("statistics mismatch")
    return EXIT_OK


def _train_one(config: RunConfig, train_pairs, dev_pairs, out_dir: str, echo=True):
    os.makedirs(out_dir, exist_ok=True)
    idf = optim.build_idf(train_pairs) if config.n_features else None
    lines = []

    def log_fn(line):
        lines.append(line)
        if echo:
            print(line, flush=True)

    rng = np.random.default_rng(config.seed)
    params, history = optim.train(train_pairs, dev_pairs, config, rng, idf=idf, log_fn=log_fn)
    with open(os.path.join(out_dir, "train.log"), "w", encoding="utf-8", newline="\n") as f:
        for line in lines:
            f.write(line + "\n")
        f.write(f"best_epoch {history.best_epoch}\n")
    extra = {"idf": idf.to_dict() if idf else None, "best_epoch": history.best_epoch}
    model.save_checkpoint(os.path.join(out_dir, "model.npz"), params, extra=extra)
    if idf:
        idf.save(os.path.join(out_dir, "idf.tsv"))
    write_config_file(config, os.path.join(out_dir, "config.txt"))
    return params, idf, history


def _eval_one(params, idf, pairs, out_dir: str, split_name: str, tag: str):
    split = optim.encode_split(pairs, params.config, idf)
    scores = model.score_batch(params, split.Q, split.A, split.feats)
    scored = split.scored(scores)
    report = rankeval.evaluate(scored)
    os.makedirs(out_dir, exist_ok=True)
    rankeval.write_trec_run(scored, tag, os.path.join(out_dir, f"{split_name}.run"))
    rankeval.write_qrels(pairs, os.path.join(out_dir, f"{split_name}.qrels"))
    return report


def _print_report(report, split_name="test"):
    print(
        f"{split_name}\tMAP {report.map:.4f}\tMRR {report.mrr:.4f}\t"
        f"evaluated {report.n_evaluated}\tskipped {report.n_skipped}"
    )


def cmd_train(args) -> int:
    config = resolve_config(args)
    train_pairs = _load(args.train, args.dataset)
    dev_pairs = _load(args.dev, args.dataset)
    params, idf, _ = _train_one(config, train_pairs, dev_pairs, args.out)
    if args.test:
        _print_report(_eval_one(params, idf, _load(args.test, args.dataset), args.out, "test", args.tag))
    return EXIT_OK


def load_for_eval(path):
    params, extra = model.load_checkpoint(path)
    idf = IdfTable.from_dict(extra["idf"]) if extra.get("idf") else None
    if params.config.n_features and idf is None:
        raise CheckpointError(f"{path}: checkpoint has no IDF table but the model uses overlap features")
    return params, idf


def cmd_eval(args) -> int:
    if not os.path.exists(args.checkpoint):
        raise FileNotFoundError(f"no such file: {args.checkpoint}")
    params, idf = load_for_eval(args.checkpoint)
    pairs = _load(args.test, args.dataset)
    report = _eval_one(params, idf, pairs, args.out, args.split_name, args.tag)
    _print_report(report, args.split_name)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    start = time.perf_counter()
    cfg = optim.tiny_config(lam=args.lam)
    result = optim.grad_check_detailed(cfg, np.random.default_rng(args.seed), h=args.h)
    elapsed = time.perf_counter() - start
    ok = result.max_rel_error < GRADCHECK_TOL
    print(
        f"gradcheck max_rel_error {result.max_rel_error:.3e} (worst {result.worst}) "
        f"params {result.n_checked} time {elapsed:.1f}s {'PASS' if ok else 'FAIL'}"
    )
    if not ok:
        raise CheckFailed("gradient check failed")
    return EXIT_OK


def cmd_synth(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    sizes = {"train": args.questions, "dev": max(2, args.questions // 4), "test": max(2, args.questions // 4)}
    for k, (split, n) in enumerate(sizes.items()):
        pairs = synthetic.make_pairs(n, args.answers, seed=args.seed + k, prefix=f"{split}-q")
        dataio.write_canonical_tsv(pairs, os.path.join(args.out, f"{split}.tsv"))
        print(f"{split}\t{dataio.compute_stats(pairs).format()}")
    return EXIT_OK


def format_pm(mean: float, spread: float) -> str:
    """``.7295 ± .0036`` formatting."""

    def short(x):
        s = f"{x:.4f}"
        return s[1:] if s.startswith("0.") else s

    return f"{short(mean)} ± {short(spread)}"


def aggregate(rows):
    """rows: list of (seed, map, mrr). Returns {metric: (mean, variance, std)}."""
    out = {}
    for j, name in ((1, "map"), (2, "mrr")):
        vals = np.array([r[j] for r in sorted(rows)])
        var = float(np.var(vals, ddof=1)) if len(vals) > 1 else 0.0
        out[name] = (float(np.mean(vals)), var, math.sqrt(var))
    return out


def write_report(rows, path):
    agg = aggregate(rows)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("seed\tmap\tmrr\n")
        for seed, m, r in sorted(rows):
            f.write(f"{seed}\t{m:.6f}\t{r:.6f}\n")
        for k, label in ((0, "mean"), (1, "variance"), (2, "std")):
            f.write(f"{label}\t{agg['map'][k]:.6f}\t{agg['mrr'][k]:.6f}\n")
        f.write(
            f"reported\t{format_pm(agg['map'][0], agg['map'][2])}\t{format_pm(agg['mrr'][0], agg['mrr'][2])}\n"
        )
    return agg


def cmd_experiment(args) -> int:
    config = resolve_config(args)
    base_seed = config.seed
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    train_pairs = _load(args.train, args.dataset)
    dev_pairs = _load(args.dev, args.dataset)
    test_pairs = _load(args.test, args.dataset)
    rows = []
    for seed in range(base_seed, base_seed + args.seeds):
        cfg = dataclasses.replace(config, seed=seed, conv_blocks=list(config.conv_blocks))
        run_dir = os.path.join(args.out, f"seed{seed}")
        print(f"# seed {seed}", flush=True)
        params, idf, _ = _train_one(cfg, train_pairs, dev_pairs, run_dir, echo=not args.quiet)
        report = _eval_one(params, idf, test_pairs, run_dir, "test", args.tag)
        _print_report(report)
        rows.append((seed, report.map, report.mrr))
    agg = write_report(rows, os.path.join(args.out, "report.tsv"))
    for name in ("map", "mrr"):
        mean, var, std = agg[name]
        print(f"{name.upper()}\tmean {mean:.4f}\tvariance {var:.6f}\tstd {std:.4f}\t{format_pm(mean, std)}")
    return EXIT_OK


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="csrqa", description="Character-level CNN answer selection.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("alphabet", help="character alphabet utilities")
    a.add_argument("action", choices=("dump",))
    a.add_argument("--out", help="write to a file instead of stdout")
    a.set_defaults(func=cmd_alphabet)

    pr = sub.add_parser("prepare", help="convert splits to canonical TSV and check their statistics")
    pr.add_argument("--dataset", choices=("trecqa", "wikiqa", "canonical"), default="canonical")
    for split in ("train", "dev", "test"):
        pr.add_argument(f"--{split}")
    pr.add_argument("--out", required=True)
    pr.add_argument("--no-verify", action="store_true", help="skip the published-statistics check")
    pr.set_defaults(func=cmd_prepare)

    t = sub.add_parser("train", help="train one model")
    _add_config_flags(t)
    t.add_argument("--train", required=True)
    t.add_argument("--dev", required=True)
    t.add_argument("--test")
    t.add_argument("--out", required=True)
    t.add_argument("--tag", default="csr")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a split with a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--test", required=True)
    e.add_argument("--dataset", choices=("trecqa", "wikiqa", "canonical"), default="canonical")
    e.add_argument("--out", required=True)
    e.add_argument("--tag", default="csr")
    e.add_argument("--split-name", default="test")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference check of the full model gradient")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--h", type=float, default=1e-5)
    g.add_argument("--lam", type=float, default=5e-4)
    g.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("synth", help="write a small synthetic corpus as canonical TSVs")
    s.add_argument("--out", required=True)
    s.add_argument("--questions", type=int, default=40)
    s.add_argument("--answers", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    x = sub.add_parser("experiment", help="train and test over several seeds")
    _add_config_flags(x)
    x.add_argument("--train", required=True)
    x.add_argument("--dev", required=True)
    x.add_argument("--test", required=True)
    x.add_argument("--seeds", type=int, default=10)
    x.add_argument("--out", required=True)
    x.add_argument("--tag", default="csr")
    x.add_argument("--quiet", action="store_true", help="do not echo per-epoch lines")
    x.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, DataError, CheckpointError, EvaluationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CheckFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
