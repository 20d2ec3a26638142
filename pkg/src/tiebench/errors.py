"""Exception taxonomy shared across the engine.

Two broad families matter for the CLI exit-code contract: subclasses of
:class:`ValidationFailure` signal bad input data (exit code 1), everything
else that escapes is a runtime error (exit code 2).
"""

from __future__ import annotations


class TiebenchError(Exception):
    """Base class for all engine errors."""


class ValidationFailure(TiebenchError):
    """Input data violates a schema or invariant."""


# ── manifest / ratings ingestion ─────────────────────────────────────────────

class MissingField(ValidationFailure):
    pass


class UnknownTask(ValidationFailure):
    pass


class DuplicateItemId(ValidationFailure):
    pass


class UnreadableImage(ValidationFailure):
    pass


class ScoreOutOfRange(ValidationFailure):
    pass


class DuplicateRating(ValidationFailure):
    pass


class UnknownItem(ValidationFailure):
    pass


# ── subjective processing ────────────────────────────────────────────────────

class NoValidRatings(ValidationFailure):
    """An item ended up with zero surviving ratings."""


# ── rank statistics ──────────────────────────────────────────────────────────

class DegenerateSeries(ValidationFailure):
    """A correlation coefficient is undefined (a constant side)."""


class LengthMismatch(ValidationFailure):
    pass


# ── reference metrics ────────────────────────────────────────────────────────

class DecodeError(ValidationFailure):
    pass


class DimensionMismatch(ValidationFailure):
    pass


class TooSmall(ValidationFailure):
    """Image smaller than the metric's minimum window."""


# ── scorer gateway ───────────────────────────────────────────────────────────

class PartialCoverage(ValidationFailure):
    """A metric run misses items for a dimension it claims."""

    def __init__(self, message: str, missing: list | None = None):
        super().__init__(message)
        self.missing = missing or []


class MalformedResponse(TiebenchError):
    pass


class RemoteScoringFailed(TiebenchError):
    """One or more (item, dimension) requests remained unscored after retries."""

    def __init__(self, message: str, failures: list | None = None):
        super().__init__(message)
        self.failures = failures or []


# ── leaderboard / report ─────────────────────────────────────────────────────

class CoverageError(ValidationFailure):
    pass


class MissingDimension(ValidationFailure):
    pass


class NonPositiveInput(ValidationFailure):
    pass


# ── campaign service ─────────────────────────────────────────────────────────

class CampaignError(TiebenchError):
    pass


class InvalidConfig(ValidationFailure):
    pass


class Conflict(CampaignError):
    """Campaign id already exists."""


class UnknownCampaign(CampaignError):
    pass


class UnknownSession(CampaignError):
    pass


class NothingToAssign(CampaignError):
    """The subject has no unrated, assignable items left."""


class CampaignComplete(CampaignError):
    pass


class OutOfOrderSubmission(CampaignError):
    pass


class SessionExpired(CampaignError):
    pass
