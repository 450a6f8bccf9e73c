"""Perplexity evaluation, the max-prob oracle, weight/advantage analysis
and the token heatmap.

Perplexity is exp of the mean per-token negative log-likelihood (natural
logs internally; the value is base-agnostic). Position 0 of each sequence
is never scored, matching the cache convention.
"""

from __future__ import annotations

import html as _html
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .cache import DistCache
from .combine import CombinationParams, combine, lambda_of
from .errors import (
    EmptyCache,
    EmptyEval,
    NoLambda,
    ShapeError,
    UndefinedCorrelation,
)

EVAL_BATCH = 4096
LOG_FLOOR = 1e-300  # perplexity guard only; fitted combos never get here


@dataclass
class EvalResult:
    perplexity: float
    token_count: int
    log_probs: Optional[np.ndarray] = None  # per-token ln P(target), if retained


def _result(log_probs: np.ndarray, keep: bool) -> EvalResult:
    if log_probs.size == 0:
        raise EmptyEval("no scored positions")
    ppl = float(np.exp(-np.mean(log_probs)))
    return EvalResult(ppl, int(log_probs.size), log_probs if keep else None)


def model_perplexity(cache: DistCache, which: str, keep_log_probs: bool = False) -> EvalResult:
    """Perplexity of one cached model ('small' or 'large') on its targets."""
    if which not in ("small", "large"):
        raise ValueError("which must be 'small' or 'large'")
    if cache.positions == 0:
        raise EmptyCache("empty cache")
    return _result(cache.target_log_probs(which), keep_log_probs)


def combined_perplexity(
    cache: DistCache, params: CombinationParams, keep_log_probs: bool = False
) -> EvalResult:
    """Perplexity of the fused model over the cache, eval-mode networks."""
    if cache.positions == 0:
        raise EmptyCache("empty cache")
    params.eval()
    lp = np.empty(cache.positions)
    pS, pL, targets = cache.p_small, cache.p_large, cache.targets
    for i in range(0, cache.positions, EVAL_BATCH):
        sl = slice(i, i + EVAL_BATCH)
        pC = combine(params, pS[sl].astype(np.float64), pL[sl].astype(np.float64))
        rows = np.arange(pC.shape[0])
        lp[sl] = np.log(np.maximum(pC[rows, targets[sl]], LOG_FLOOR))
    return _result(lp, keep_log_probs)


def streaming_perplexity(lm, sequences: Sequence, keep_log_probs: bool = False) -> EvalResult:
    """Perplexity of an LM scored directly over sequences (positions >= 1),
    bypassing any cache."""
    seqs = [np.asarray(s) for s in sequences if len(s) >= 2]
    if not seqs:
        raise EmptyEval("no sequence has a scoreable position")
    parts = []
    for s in seqs:
        dists = lm.seq_dists(s)[1:]
        parts.append(np.log(dists[np.arange(len(s) - 1), s[1:]]))
    return _result(np.concatenate(parts), keep_log_probs)


def oracle_perplexity(cache: DistCache, keep_log_probs: bool = False) -> EvalResult:
    """The max-prob oracle: a perfect combination that puts all weight on
    whichever model assigns the target the higher probability (ties go to
    the large model). Lower-bounds every combination's perplexity."""
    if cache.positions == 0:
        raise EmptyCache("empty cache")
    ls = cache.target_log_probs("small")
    ll = cache.target_log_probs("large")
    return _result(np.maximum(ls, ll), keep_log_probs)


def oracle_choices(cache: DistCache) -> np.ndarray:
    """Per position, which model the oracle scores with: 'small' where it is
    strictly better, else 'large'."""
    ls = cache.target_log_probs("small")
    ll = cache.target_log_probs("large")
    return np.where(ls > ll, "small", "large")


# -- rank correlation -------------------------------------------------------

def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    xs = x[order]
    # rank of each sorted element = mean of its tie-group's 1-based positions
    boundaries = np.concatenate([[True], xs[1:] != xs[:-1]])
    group = np.cumsum(boundaries) - 1
    counts = np.bincount(group)
    ends = np.cumsum(counts)
    starts = ends - counts
    mean_rank = (starts + ends + 1) / 2.0  # positions are 1-based
    ranks = np.empty(len(x))
    ranks[order] = mean_rank[group]
    return ranks


def spearman(a: Sequence[float], b: Sequence[float]) -> float:
    """Spearman rho: Pearson correlation of average ranks (ties averaged).
    Raises UndefinedCorrelation when either input has zero rank variance."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ShapeError("spearman needs two equal-length 1-D inputs")
    if len(a) < 2:
        raise ShapeError("spearman needs at least 2 observations")
    ra, rb = _average_ranks(a), _average_ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = np.sqrt((ra * ra).sum() * (rb * rb).sum())
    if denom == 0.0:
        raise UndefinedCorrelation("an input has zero rank variance")
    return float((ra * rb).sum() / denom)


# -- weight vs advantage analysis -------------------------------------------

ANALYZABLE_KINDS = ("entropy-scalar", "full-scalar")


@dataclass
class TokenAnalysis:
    targets: np.ndarray    # (T,) token ids
    log_p_small: np.ndarray  # (T,) ln P_S(target)
    log_p_large: np.ndarray  # (T,) ln P_L(target)
    lam: np.ndarray        # (T,) weight on the small model
    diff: np.ndarray       # (T,) ln P_S - ln P_L (small-model advantage)


def analyze(cache: DistCache, params: CombinationParams) -> Tuple[TokenAnalysis, float]:
    """Per-token weights and log-prob advantages, plus their Spearman rho.
    Only kinds producing a single input-dependent factor are analyzable."""
    if params.kind not in ANALYZABLE_KINDS:
        raise NoLambda(
            f"analysis needs a single input-dependent weight; {params.kind} does not provide one"
        )
    if cache.positions == 0:
        raise EmptyCache("empty cache")
    params.eval()
    lam = np.empty(cache.positions)
    for i in range(0, cache.positions, EVAL_BATCH):
        sl = slice(i, i + EVAL_BATCH)
        lam[sl] = lambda_of(
            params,
            cache.p_small[sl].astype(np.float64),
            cache.p_large[sl].astype(np.float64),
        )
    ls = cache.target_log_probs("small")
    ll = cache.target_log_probs("large")
    analysis = TokenAnalysis(
        targets=cache.targets.copy(),
        log_p_small=ls,
        log_p_large=ll,
        lam=lam,
        diff=ls - ll,
    )
    return analysis, spearman(lam, analysis.diff)


# -- heatmap ------------------------------------------------------------------

N_BINS = 5  # magnitude buckets per sign


def _bin_class(value: float, scale: float) -> str:
    if value == 0.0 or scale == 0.0:
        return "n"
    level = min(N_BINS, max(1, int(np.ceil(abs(value) / scale * N_BINS))))
    return f"{'g' if value > 0 else 'r'}{level}"


_HEATMAP_CSS = """
body { font-family: monospace; background: #fff; margin: 1.5em; }
h3 { font-family: sans-serif; }
.row { line-height: 1.9; margin-bottom: 1.5em; }
span.tok { padding: 1px 2px; border-radius: 2px; white-space: pre-wrap; }
.n  { background: #f2f2f2; }
.g1 { background: #e3f2e3; } .g2 { background: #bfe3bf; } .g3 { background: #8fcf8f; }
.g4 { background: #55b855; } .g5 { background: #1d9c1d; color: #fff; }
.r1 { background: #fbe4e4; } .r2 { background: #f4bcbc; } .r3 { background: #ea8a8a; }
.r4 { background: #dc5252; color: #fff; } .r5 { background: #c21f1f; color: #fff; }
"""


def heatmap(
    tokens: Sequence[str],
    diffs: Sequence[float],
    lambdas: Sequence[float],
    out_path=None,
) -> str:
    """Two aligned rows of per-token spans: the first colored by which model
    predicted the token better (green = small-model advantage, red = large),
    the second by the weight the combination gave the small model (lambda
    relative to 0.5). Intensity uses five magnitude bins per sign. Returns
    the self-contained HTML document; writes it when out_path is given."""
    tokens = list(tokens)
    diffs = np.asarray(diffs, dtype=np.float64)
    lambdas = np.asarray(lambdas, dtype=np.float64)
    if not (len(tokens) == len(diffs) == len(lambdas)):
        raise ShapeError("tokens, diffs and lambdas must have equal length")

    diff_scale = float(np.max(np.abs(diffs))) if len(diffs) else 0.0
    lam_centered = lambdas - 0.5
    lam_scale = float(np.max(np.abs(lam_centered))) if len(lambdas) else 0.0

    def spans(values, scale):
        return "".join(
            f'<span class="tok {_bin_class(float(v), scale)}" title="{v:+.4f}">'
            f"{_html.escape(tok)}</span> "
            for tok, v in zip(tokens, values)
        )

    doc = (
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">"
        "<title>token heatmap</title>"
        f"<style>{_HEATMAP_CSS}</style></head><body>"
        "<h3>Log-probability advantage of the small model (green = small better)</h3>"
        f'<div class="row">{spans(diffs, diff_scale)}</div>'
        "<h3>Weight given to the small model (green = weight &gt; 0.5)</h3>"
        f'<div class="row">{spans(lam_centered, lam_scale)}</div>'
        "</body></html>\n"
    )
    if out_path is not None:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(doc)
    return doc
