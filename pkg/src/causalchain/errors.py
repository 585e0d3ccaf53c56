"""Exception types shared across the toolkit."""


class CausalChainError(Exception):
    """Base class for all toolkit errors."""


class MalformedCode(CausalChainError):
    """Raised when a raw code string cannot be normalized."""


class GemParseError(CausalChainError):
    """Raised on a malformed line in a GEM crosswalk file."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class AcmeParseError(CausalChainError):
    """Raised on a malformed line in an ACME decision-table file."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class LineCountMismatch(CausalChainError):
    """Source and target corpus files have different line counts."""


class ConfigInvalid(CausalChainError):
    """A configuration object violates its invariants."""


class NonFiniteGradient(CausalChainError):
    """A gradient contained NaN or infinity."""


class NonFiniteLoss(CausalChainError):
    """A loss evaluation produced NaN or infinity."""


class EmptyCorpus(CausalChainError):
    """An operation requiring at least one record got none."""


class IoError(CausalChainError):
    """File read/write failure in an export helper."""
