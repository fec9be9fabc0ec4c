"""Exception hierarchy shared across the engine.

Everything raised on bad data derives from LateriError so callers (and the
CLI exit-code mapping) can tell data problems apart from usage problems.
"""


class LateriError(Exception):
    """Base class for all data/contract violations raised by the engine."""


class DimensionMismatch(LateriError):
    """Operands disagree on vector width."""


class UnknownPassage(LateriError):
    """A passage id was requested that the index does not contain."""

    def __init__(self, passage_id: str):
        super().__init__(f"unknown passage id: {passage_id!r}")
        self.passage_id = passage_id


class FormatError(LateriError):
    """A file (index, shard, qrels, run) violates its format contract."""
