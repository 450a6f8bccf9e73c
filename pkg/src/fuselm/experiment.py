"""Spec-driven experiment runner.

An experiment spec is a flat JSON object (or dict). Common keys:

    experiment        headline | fit-size | expert-sweep | mixin
    domain_corpus     path to in-domain plain text          (required)
    general_corpus    path to general/mixed plain text      (required)
    vocab_mode        word | byte          (default word)
    vocab_max_size    word-mode cap        (default 2000)
    seq_len           tokens per sequence  (default 128 at desk scale)
    n_fit, n_test     sequences per split  (defaults 200 / 150)
    expert_order, generalist_order, alpha, interp  n-gram settings
    kinds             combination kinds to fit (default: all seven)
    lr, batch_size, epochs, hidden, seed   fitting settings
    fit_sizes         sequence counts      (fit-size experiments)
    expert_fractions  shares of the domain train set used to train the
                      expert (expert-sweep); the sweep also runs a control
                      condition with a same-size general-text model in the
                      expert slot

Every experiment emits one record per (condition, kind) with both in-domain
and general-test perplexity, written as results.json plus an aligned
results.txt table when an output directory is given.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .cache import DistCache, dump_cache
from .combine import KINDS
from .errors import NotEnoughData
from .evaluate import (
    combined_perplexity,
    model_perplexity,
    oracle_perplexity,
)
from .fitting import FitConfig, FitReport, fit
from .ngram import NGramLM, ngram_train
from .vocab import DatasetSplit, Vocabulary, build_vocab, chunk, split_fit_test, tokenize

DEFAULTS = {
    "experiment": "headline",
    "vocab_mode": "word",
    "vocab_max_size": 2000,
    "seq_len": 128,
    "n_fit": 200,
    "n_test": 150,
    "expert_order": 3,
    "generalist_order": 5,
    "alpha": 0.1,
    "expert_interp": None,      # None -> uniform over orders
    "generalist_interp": None,
    "kinds": list(KINDS),
    "lr": None,
    "batch_size": 1024,
    "epochs": 1,
    "hidden": 512,
    "seed": 0,
    "fit_sizes": None,
    "expert_fractions": None,
}

_REQUIRED = {
    "headline": ("domain_corpus", "general_corpus"),
    "fit-size": ("domain_corpus", "general_corpus", "fit_sizes"),
    "expert-sweep": ("domain_corpus", "general_corpus", "expert_fractions"),
    "mixin": ("domain_corpus", "general_corpus"),
}

BASELINE_ROWS = ("small-model", "large-model", "oracle")


def load_spec(spec) -> dict:
    """Merge a spec dict or JSON file over the defaults and validate it."""
    if not isinstance(spec, dict):
        with open(spec) as fh:
            spec = json.load(fh)
    cfg = dict(DEFAULTS)
    cfg.update(spec)
    exp = cfg["experiment"]
    if exp not in _REQUIRED:
        raise ValueError(f"experiment spec key 'experiment' has unknown value {exp!r}")
    for key in _REQUIRED[exp]:
        if cfg.get(key) in (None, ""):
            raise ValueError(f"experiment spec is missing key {key!r}")
    for key in ("domain_corpus", "general_corpus"):
        if not os.path.exists(cfg[key]):
            raise ValueError(f"experiment spec key {key!r}: no such file {cfg[key]!r}")
    return cfg


def _read(path) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


@dataclass
class Workbench:
    """Everything the experiments share: vocab, splits, models, caches."""

    cfg: dict
    vocab: Vocabulary
    dom_split: DatasetSplit
    gen_split: DatasetSplit
    expert: NGramLM
    generalist: NGramLM
    caches: Dict[str, DistCache] = field(default_factory=dict)

    def cache(self, name: str) -> DistCache:
        """dom_fit / dom_test / gen_fit / gen_test, built on first use."""
        if name not in self.caches:
            split, part = name.split("_")
            seqs = getattr(self.dom_split if split == "dom" else self.gen_split,
                           "train_fit" if part == "fit" else "test")
            self.caches[name] = dump_cache(
                self.expert, self.generalist, seqs,
                provenance=json.dumps({"part": name, "seed": self.cfg["seed"]},
                                      sort_keys=True),
            )
        return self.caches[name]

    def fit_config(self, kind: str, mixin: Optional[DistCache] = None) -> FitConfig:
        cfg = self.cfg
        return FitConfig(
            kind=kind, lr=cfg["lr"], batch_size=cfg["batch_size"],
            epochs=cfg["epochs"], seed=cfg["seed"], hidden=cfg["hidden"],
            mixin_cache=mixin,
        )


def prepare(cfg: dict) -> Workbench:
    """Shared pipeline: one vocabulary over both corpora, token sequences,
    splits, and the expert / generalist pair."""
    dom_text = _read(cfg["domain_corpus"])
    gen_text = _read(cfg["general_corpus"])
    vocab = build_vocab([dom_text, gen_text], mode=cfg["vocab_mode"],
                        max_size=cfg["vocab_max_size"])
    L = cfg["seq_len"]
    dom_seqs = chunk(tokenize(dom_text, vocab), L)
    gen_seqs = chunk(tokenize(gen_text, vocab), L)
    n_fit, n_test, seed = cfg["n_fit"], cfg["n_test"], cfg["seed"]
    if len(dom_seqs) < n_fit + n_test + 1 or len(gen_seqs) < n_fit + n_test + 1:
        raise NotEnoughData(
            f"corpora too small for n_fit={n_fit}, n_test={n_test} at seq_len={L}"
        )
    dom_split = split_fit_test(dom_seqs, n_fit, n_test, seed)
    gen_split = split_fit_test(gen_seqs, n_fit, n_test, seed + 1)
    expert = ngram_train(
        dom_split.train, cfg["expert_order"], alpha=cfg["alpha"],
        interp=cfg["expert_interp"], vocab_size=vocab.size, bos_id=vocab.bos_id,
        name="expert",
    )
    generalist = ngram_train(
        gen_split.train, cfg["generalist_order"], alpha=cfg["alpha"],
        interp=cfg["generalist_interp"], vocab_size=vocab.size,
        bos_id=vocab.bos_id, name="generalist",
    )
    return Workbench(cfg, vocab, dom_split, gen_split, expert, generalist)


def _record(experiment, condition, kind, dom_cache, gen_cache,
            params=None, report: Optional[FitReport] = None) -> dict:
    if kind == "small-model":
        dom = model_perplexity(dom_cache, "small").perplexity
        gen = model_perplexity(gen_cache, "small").perplexity
    elif kind == "large-model":
        dom = model_perplexity(dom_cache, "large").perplexity
        gen = model_perplexity(gen_cache, "large").perplexity
    elif kind == "oracle":
        dom = oracle_perplexity(dom_cache).perplexity
        gen = oracle_perplexity(gen_cache).perplexity
    else:
        dom = combined_perplexity(dom_cache, params).perplexity
        gen = combined_perplexity(gen_cache, params).perplexity
    rec = {
        "experiment": experiment,
        "condition": condition,
        "kind": kind,
        "ppl_domain": dom,
        "ppl_general": gen,
    }
    if report is not None:
        rec["fit_positions"] = report.positions_seen
        rec["steps"] = len(report.loss_trace)
    return rec


def _condition_records(wb, experiment, condition, fit_cache, dom_cache, gen_cache,
                       mixin=None) -> List[dict]:
    records = [
        _record(experiment, condition, row, dom_cache, gen_cache)
        for row in BASELINE_ROWS
    ]
    for kind in wb.cfg["kinds"]:
        report = fit(fit_cache, wb.fit_config(kind, mixin=mixin))
        records.append(
            _record(experiment, condition, kind, dom_cache, gen_cache,
                    params=report.params, report=report)
        )
    return records


def _run_headline(wb: Workbench) -> List[dict]:
    return _condition_records(
        wb, "headline", "train-fit",
        wb.cache("dom_fit"), wb.cache("dom_test"), wb.cache("gen_test"),
    )


def _run_fit_size(wb: Workbench) -> List[dict]:
    records = []
    full = wb.cache("dom_fit")
    per_seq = wb.dom_split.seq_len - 1
    for size in wb.cfg["fit_sizes"]:
        if size > wb.cfg["n_fit"]:
            raise NotEnoughData(f"fit size {size} exceeds n_fit={wb.cfg['n_fit']}")
        sub = full.head(size * per_seq)
        records += _condition_records(
            wb, "fit-size", str(size), sub, wb.cache("dom_test"), wb.cache("gen_test")
        )
    return records


def _run_expert_sweep(wb: Workbench) -> List[dict]:
    """Vary the quality of the small model: experts trained on shrinking
    shares of the domain train set, plus a control where the 'expert' is a
    same-order model trained on general text (no domain expertise at all)."""
    cfg = wb.cfg
    records = []
    dom_train = wb.dom_split.train
    for frac in cfg["expert_fractions"]:
        cond = f"{frac:g}"
        n = max(1, int(round(len(dom_train) * float(frac))))
        small = ngram_train(
            dom_train[:n], cfg["expert_order"], alpha=cfg["alpha"],
            interp=cfg["expert_interp"], vocab_size=wb.vocab.size,
            bos_id=wb.vocab.bos_id, name=f"expert-{cond}",
        )
        records += _sweep_condition(wb, f"expert@{cond}", small)
    n_ctrl = min(len(wb.gen_split.train), len(dom_train))
    control = ngram_train(
        wb.gen_split.train[:n_ctrl], cfg["expert_order"], alpha=cfg["alpha"],
        interp=cfg["expert_interp"], vocab_size=wb.vocab.size,
        bos_id=wb.vocab.bos_id, name="general-as-small",
    )
    records += _sweep_condition(wb, "general-as-small", control)
    return records


def _sweep_condition(wb: Workbench, condition: str, small: NGramLM) -> List[dict]:
    fit_cache = dump_cache(small, wb.generalist, wb.dom_split.train_fit)
    dom_cache = dump_cache(small, wb.generalist, wb.dom_split.test)
    gen_cache = dump_cache(small, wb.generalist, wb.gen_split.test)
    return _condition_records(wb, "expert-sweep", condition, fit_cache,
                              dom_cache, gen_cache)


def _run_mixin(wb: Workbench) -> List[dict]:
    records = _condition_records(
        wb, "mixin", "domain-fit",
        wb.cache("dom_fit"), wb.cache("dom_test"), wb.cache("gen_test"),
    )
    records += _condition_records(
        wb, "mixin", "mixin-fit",
        wb.cache("dom_fit"), wb.cache("dom_test"), wb.cache("gen_test"),
        mixin=wb.cache("gen_fit"),
    )
    return records


_RUNNERS = {
    "headline": _run_headline,
    "fit-size": _run_fit_size,
    "expert-sweep": _run_expert_sweep,
    "mixin": _run_mixin,
}


def format_table(records: List[dict]) -> str:
    """Aligned text table: one row per kind, one 'dom / gen' column pair per
    condition, baselines first."""
    conditions = list(dict.fromkeys(r["condition"] for r in records))
    kinds = list(dict.fromkeys(r["kind"] for r in records))
    by_key = {(r["condition"], r["kind"]): r for r in records}
    label_w = max(len(k) for k in kinds) + 2
    col_w = 19
    lines = [
        "".ljust(label_w) + "".join(c.center(col_w) for c in conditions),
        "".ljust(label_w) + "".join("dom        gen".center(col_w) for _ in conditions),
    ]
    for kind in kinds:
        row = kind.ljust(label_w)
        for cond in conditions:
            r = by_key.get((cond, kind))
            cell = f"{r['ppl_domain']:8.3f} {r['ppl_general']:8.3f}" if r else "-"
            row += cell.center(col_w)
        lines.append(row)
    return "\n".join(lines) + "\n"


def run_experiment(spec, out_dir=None) -> List[dict]:
    """Run the experiment described by a spec dict or JSON path; write
    results.json and results.txt when out_dir is given."""
    cfg = load_spec(spec)
    wb = prepare(cfg)
    records = _RUNNERS[cfg["experiment"]](wb)
    table = format_table(records)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "results.json"), "w") as fh:
            json.dump({"spec": {k: v for k, v in cfg.items() if v is not None},
                       "records": records}, fh, indent=2)
            fh.write("\n")
        with open(os.path.join(out_dir, "results.txt"), "w") as fh:
            fh.write(table)
    return records
