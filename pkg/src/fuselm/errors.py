"""Exception hierarchy. Everything raised on purpose derives from FuseLMError,
which the CLI maps to exit code 2 (data/protocol errors)."""


class FuseLMError(Exception):
    pass


class EmptyCorpus(FuseLMError):
    """Corpus contained no tokens."""


class NotEnoughData(FuseLMError):
    """Fewer sequences than a split or experiment requires."""


class VocabMismatch(FuseLMError):
    """Two components disagree on vocabulary size."""


class ShapeError(FuseLMError, ValueError):
    """Array dimensions inconsistent with the operation."""


class BatchTooSmall(FuseLMError):
    """Train-mode BatchNorm needs at least two rows."""


class CacheMismatch(FuseLMError):
    """Backward called with an activation cache from a stale forward."""


class DegenerateRenormalization(FuseLMError):
    """Token-wise combination summed to ~0; the inputs are broken."""


class NoLambda(FuseLMError):
    """The kind does not expose a combination weight (mean), or analysis
    asked for a single factor from a vector kind."""


class EmptyCache(FuseLMError):
    """Distribution cache holds zero positions."""


class EmptyEval(FuseLMError):
    """Nothing to score: no positions / no sequences."""


class UndefinedCorrelation(FuseLMError):
    """Rank correlation undefined because one input has zero rank variance."""


class RemoteUnavailable(FuseLMError):
    """Transport-level failure talking to a distribution endpoint."""


class ProtocolError(FuseLMError):
    """Endpoint answered, but not in the wire format we speak."""
