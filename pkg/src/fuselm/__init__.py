"""fuselm: adapt a black-box language model to a new domain by fusing its
next-token distribution with a small domain expert's, through a learned
combination function operating purely at the probability level."""

__version__ = "0.1.0"

from .cache import DistCache, dump_cache, read_cache, write_cache
from .combine import (
    KINDS,
    CombinationParams,
    combine,
    entropy,
    init_params,
    lambda_of,
    load_params,
    save_params,
)
from .errors import FuseLMError
from .estimator import DistributionCombiner
from .evaluate import (
    EvalResult,
    TokenAnalysis,
    analyze,
    combined_perplexity,
    heatmap,
    model_perplexity,
    oracle_perplexity,
    spearman,
    streaming_perplexity,
)
from .fitting import FitConfig, FitReport, fit, nll_loss
from .ngram import NGramLM, load_ngram, ngram_train
from .remote import RemoteLM, remote_next_dist
from .vocab import (
    DatasetSplit,
    Vocabulary,
    build_vocab,
    chunk,
    detokenize,
    load_vocab,
    save_vocab,
    split_fit_test,
    tokenize,
)

__all__ = [
    "__version__",
    "DistCache", "dump_cache", "read_cache", "write_cache",
    "KINDS", "CombinationParams", "combine", "entropy", "init_params",
    "lambda_of", "load_params", "save_params",
    "FuseLMError",
    "DistributionCombiner",
    "EvalResult", "TokenAnalysis", "analyze", "combined_perplexity",
    "heatmap", "model_perplexity", "oracle_perplexity", "spearman",
    "streaming_perplexity",
    "FitConfig", "FitReport", "fit", "nll_loss",
    "NGramLM", "load_ngram", "ngram_train",
    "RemoteLM", "remote_next_dist",
    "DatasetSplit", "Vocabulary", "build_vocab", "chunk", "detokenize",
    "load_vocab", "save_vocab", "split_fit_test", "tokenize",
]
