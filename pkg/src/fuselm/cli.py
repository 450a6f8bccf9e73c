"""Command-line front end: corpora -> vocab -> LMs -> caches -> fitting ->
evaluation -> analysis.

Exit codes: 0 success, 1 usage error, 2 data/protocol error. Flags override
values from an optional flat-JSON --config file. FUSELM_SEED provides the
default seed. Results go to stdout as text and to JSON files next to the
artifacts they describe.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

import numpy as np

from . import __version__
from .cache import dump_cache, read_cache
from .combine import KINDS, load_params, save_params
from .datagen import write_corpus
from .errors import FuseLMError
from .evaluate import (
    analyze,
    combined_perplexity,
    heatmap,
    model_perplexity,
    oracle_perplexity,
    streaming_perplexity,
)
from .experiment import format_table, run_experiment
from .fitting import FitConfig, fit
from .ngram import load_ngram, ngram_train
from .remote import RemoteLM
from .vocab import build_vocab, chunk, load_vocab, save_vocab, split_fit_test, tokenize


def _default_seed() -> int:
    return int(os.environ.get("FUSELM_SEED", "0"))


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _read_texts(paths: List[str]) -> List[str]:
    texts = []
    for p in paths:
        with open(p, encoding="utf-8") as fh:
            texts.append(fh.read())
    return texts


def _load_lm(spec: str):
    if spec.startswith("http://") or spec.startswith("https://"):
        return RemoteLM(spec)
    return load_ngram(spec)


def _config_defaults(argv: List[str]) -> dict:
    """Read --config early so its values become parser defaults; explicit
    flags then override them."""
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
            break
        if tok.startswith("--config="):
            path = tok.split("=", 1)[1]
            break
    else:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def _drop_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _sequences_for(args) -> list:
    """corpus + vocab + seq-len (+ split flags) -> token sequences."""
    vocab = load_vocab(args.vocab)
    stream = np.concatenate(
        [tokenize(t, vocab) for t in _read_texts(args.corpus)]
    )
    seqs = chunk(stream, args.seq_len)
    if args.take == "all":
        return seqs
    split = split_fit_test(seqs, args.n_fit, args.n_test, args.seed)
    return {"fit": split.train_fit, "test": split.test, "train": split.train}[args.take]


# -- subcommands -------------------------------------------------------------

def _cmd_vocab(args) -> int:
    texts = _read_texts(args.corpus)
    vocab = build_vocab(texts, mode=args.mode, max_size=args.max_size)
    save_vocab(vocab, args.out)
    print(f"vocab size {vocab.size} ({args.mode}) -> {args.out}")
    return 0


def _cmd_train_lm(args) -> int:
    vocab = load_vocab(args.vocab)
    stream = np.concatenate([tokenize(t, vocab) for t in _read_texts(args.corpus)])
    seqs = chunk(stream, args.seq_len)
    interp = None
    if args.interp:
        interp = [float(w) for w in args.interp.split(",")]
    lm = ngram_train(
        seqs, args.order, alpha=args.alpha, interp=interp,
        vocab_size=vocab.size, bos_id=vocab.bos_id, name=args.name,
    )
    lm.save(args.out)
    print(f"order-{args.order} model on {sum(len(s) for s in seqs)} tokens -> {args.out}")
    return 0


def _cmd_dump_dists(args) -> int:
    lm_small = _load_lm(args.small)
    lm_large = _load_lm(args.large)
    seqs = _sequences_for(args)
    provenance = json.dumps(
        {
            "small": args.small, "large": args.large, "corpus": args.corpus,
            "seq_len": args.seq_len, "take": args.take, "seed": args.seed,
            "n_fit": args.n_fit, "n_test": args.n_test,
        },
        sort_keys=True,
    )
    cache = dump_cache(lm_small, lm_large, seqs, path=args.out, provenance=provenance)
    print(f"cached {cache.positions} positions (|V|={cache.vocab_size}) -> {args.out}")
    return 0


def _cmd_fit(args) -> int:
    cache = read_cache(args.cache)
    mixin = read_cache(args.mixin_cache) if args.mixin_cache else None
    config = FitConfig(
        kind=args.kind, lr=args.lr, batch_size=args.batch_size,
        epochs=args.epochs, seed=args.seed, hidden=args.hidden,
        mixin_cache=mixin,
    )
    report = fit(cache, config)
    save_params(report.params, args.out)
    report_path = args.report or args.out + ".report.json"
    report.save_json(report_path)
    last = f", final loss {report.loss_trace[-1]:.4f}" if report.loss_trace else ""
    print(
        f"fit {args.kind}: {len(report.loss_trace)} steps over "
        f"{report.positions_seen} positions{last} -> {args.out}"
    )
    return 0


def _cmd_eval(args) -> int:
    if args.cache:
        cache = read_cache(args.cache)
        if args.oracle:
            res, what = oracle_perplexity(cache), "oracle"
        elif args.model:
            res, what = model_perplexity(cache, args.model), f"{args.model}-model"
        elif args.params:
            params = load_params(args.params)
            res, what = combined_perplexity(cache, params), f"combo[{params.kind}]"
        else:
            raise FuseLMError("eval needs one of --params / --model / --oracle")
        default_out = args.cache + ".eval.json"
    elif args.lm:
        if not args.corpus or not args.vocab:
            raise FuseLMError("eval --lm needs --corpus and --vocab")
        lm = _load_lm(args.lm)
        res, what = streaming_perplexity(lm, _sequences_for(args)), "streamed-lm"
        default_out = args.lm + ".eval.json"
    else:
        raise FuseLMError("eval needs --cache or --lm")
    print(f"{what} perplexity {res.perplexity:.6f} over {res.token_count} tokens")
    _drop_json(
        args.out or default_out,
        {"what": what, "perplexity": res.perplexity, "token_count": res.token_count},
    )
    return 0


def _cmd_analyze(args) -> int:
    cache = read_cache(args.cache)
    params = load_params(args.params)
    analysis, rho = analyze(cache, params)
    print(f"spearman rho {rho:.4f} over {len(analysis.lam)} tokens")
    if args.out_html:
        if args.vocab:
            vocab = load_vocab(args.vocab)
            tokens = [vocab.id_to_token[t] for t in analysis.targets[: args.limit]]
        else:
            tokens = [str(int(t)) for t in analysis.targets[: args.limit]]
        heatmap(tokens, analysis.diff[: args.limit], analysis.lam[: args.limit],
                out_path=args.out_html)
        print(f"heatmap -> {args.out_html}")
    _drop_json(
        args.out or args.cache + ".analysis.json",
        {
            "kind": params.kind,
            "rho": rho,
            "tokens": analysis.targets.tolist(),
            "lambda": analysis.lam.tolist(),
            "diff": analysis.diff.tolist(),
        },
    )
    return 0


def _cmd_experiment(args) -> int:
    records = run_experiment(args.spec, out_dir=args.out_dir)
    print(format_table(records), end="")
    if args.out_dir:
        print(f"results -> {args.out_dir}/results.json")
    return 0


def _cmd_make_corpus(args) -> int:
    write_corpus(args.out, args.role, int(args.size_mb * 1e6), args.seed)
    print(f"{args.role} corpus ~{args.size_mb} MB (seed {args.seed}) -> {args.out}")
    return 0


# -- wiring -------------------------------------------------------------------

def _add_split_flags(p: _Parser) -> None:
    p.add_argument("--corpus", nargs="+", required=True, help="plain-text file(s)")
    p.add_argument("--vocab", required=True, help="vocabulary file")
    p.add_argument("--seq-len", type=int, default=1024)
    p.add_argument("--take", choices=["all", "fit", "test", "train"], default="all",
                   help="which part of the seeded split to use")
    p.add_argument("--n-fit", type=int, default=1000)
    p.add_argument("--n-test", type=int, default=1000)


def build_parser() -> _Parser:
    parser = _Parser(prog="fuselm", description=__doc__)
    parser.add_argument("--version", action="version", version=f"fuselm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("vocab", parents=[], help="build a shared vocabulary", add_help=True)
    p.add_argument("--corpus", nargs="+", required=True)
    p.add_argument("--mode", choices=["byte", "word"], default="byte")
    p.add_argument("--max-size", type=int, default=50000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_vocab)

    p = sub.add_parser("train-lm", help="train an interpolated n-gram LM")
    p.add_argument("--corpus", nargs="+", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--interp", help="comma-separated per-order weights (default uniform)")
    p.add_argument("--seq-len", type=int, default=1024)
    p.add_argument("--name", default="ngram")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_lm)

    p = sub.add_parser(
        "dump-dists",
        help="cache both models' distributions over a corpus split "
             "(models are .ngm paths or http(s) endpoints)",
    )
    _add_split_flags(p)
    p.add_argument("--small", required=True, help="small/expert model path or URL")
    p.add_argument("--large", required=True, help="large/generalist model path or URL")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_dump_dists)

    p = sub.add_parser("fit", help="fit a combination function on a cache")
    p.add_argument("--cache", required=True)
    p.add_argument("--mixin-cache", help="optional second cache, concatenated in front")
    p.add_argument("--kind", choices=list(KINDS), required=True)
    p.add_argument("--lr", type=float, help="default 2e-3 (constant-vector: 1e-2)")
    p.add_argument("--batch-size", type=int, default=1024)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--hidden", type=int, default=512)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="report JSON path (default <out>.report.json)")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("eval", help="perplexity of a model, combo, or the oracle")
    p.add_argument("--cache")
    p.add_argument("--params", help="combination checkpoint (combo mode)")
    p.add_argument("--model", choices=["small", "large"], help="cached model mode")
    p.add_argument("--oracle", action="store_true", help="max-prob oracle mode")
    p.add_argument("--lm", help="stream an LM (path or URL) over a corpus instead")
    p.add_argument("--out", help="result JSON (default next to the input)")
    p.add_argument("--corpus", nargs="+")
    p.add_argument("--vocab")
    p.add_argument("--seq-len", type=int, default=1024)
    p.add_argument("--take", choices=["all", "fit", "test", "train"], default="all")
    p.add_argument("--n-fit", type=int, default=1000)
    p.add_argument("--n-test", type=int, default=1000)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("analyze", help="weight-vs-advantage Spearman and heatmap")
    p.add_argument("--cache", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--vocab", help="vocabulary for readable heatmap tokens")
    p.add_argument("--limit", type=int, default=200, help="heatmap token window")
    p.add_argument("--out-html", help="heatmap output path")
    p.add_argument("--out", help="analysis JSON (default <cache>.analysis.json)")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("experiment", help="run a spec-driven experiment grid")
    p.add_argument("--spec", required=True, help="experiment spec JSON")
    p.add_argument("--out-dir")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("make-corpus", help="generate a synthetic toy corpus")
    p.add_argument("--role", choices=["domain", "general"], required=True)
    p.add_argument("--size-mb", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_make_corpus)

    for sp in sub.choices.values():
        sp.add_argument("--seed", type=int, default=None,
                        help="randomness seed (default FUSELM_SEED or 0)")
        sp.add_argument("--config", help="flat JSON file of default option values")
    parser.subcommands = sub.choices
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    try:
        config = _config_defaults(argv)
    except (OSError, ValueError) as e:
        print(f"fuselm: error: {e}", file=sys.stderr)
        return 2
    if config:
        # subcommands parse into a fresh namespace, so defaults must be
        # planted on each subparser, not on the top-level parser
        for sp in parser.subcommands.values():
            sp.set_defaults(**config)
            for action in sp._actions:
                if action.required and action.dest in config:
                    action.required = False
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if getattr(args, "seed", None) is None:
        args.seed = _default_seed()
    try:
        return args.func(args)
    except FuseLMError as e:
        print(f"fuselm: error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as e:
        print(f"fuselm: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
