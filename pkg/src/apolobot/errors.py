"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ApoloError(Exception):
    """Base class for all domain errors."""


# --- command validation -----------------------------------------------------

class SelfTarget(ApoloError):
    """Offender and victim are the same account."""


class BadDuration(ApoloError):
    """Mute duration is unparsable, non-positive, or out of range."""


class NotModerator(ApoloError):
    """Invoker does not hold any configured moderator role."""


# --- transitions ------------------------------------------------------------

class IllegalEvent(ApoloError):
    """Event kind is not legal in the case's current state."""


class TerminalCase(ApoloError):
    """Non-satisfaction event submitted after the case reached a terminal state."""


class StaleStage(ApoloError):
    """Stage timeout fired for a stage the case has already departed.

    Benign: callers drop the event instead of surfacing a failure.
    """


# --- store ------------------------------------------------------------------

class VersionConflict(ApoloError):
    """Optimistic append lost the race: expected_version is stale."""

    def __init__(self, case_id: str, expected: int, actual: int):
        super().__init__(
            f"append to {case_id} expected version {expected}, stream is at {actual}"
        )
        self.case_id = case_id
        self.expected = expected
        self.actual = actual


class CorruptSequence(ApoloError):
    """Events handed to append do not form a contiguous sequence."""


class CorruptStream(ApoloError):
    """Persisted event stream does not replay cleanly (tampering or schema drift)."""


class UnknownCase(ApoloError):
    """No case stream exists for the given id."""


# --- adapter / interactions -------------------------------------------------

class Unauthorized(ApoloError):
    """Actor pressed a button or submitted a modal that is not theirs to use."""


class StaleInteraction(ApoloError):
    """Case advanced past the state the interaction was rendered for."""


class PlatformUnavailable(ApoloError):
    """Outbound platform call failed in a retryable way."""


class PermissionDenied(ApoloError):
    """Platform rejected a call for lack of permissions."""

    def __init__(self, message: str, critical: bool = False):
        super().__init__(message)
        self.critical = critical


class MissingPermissions(ApoloError):
    """Bot account lacks required grants; startup must refuse to proceed."""

    def __init__(self, missing: list[str]):
        super().__init__("missing platform permissions: " + ", ".join(missing))
        self.missing = missing


# --- config -----------------------------------------------------------------

class ConfigError(ApoloError):
    """Config file is missing, malformed, or fails validation."""


class NonTerminalCase(ApoloError):
    """Outcome classification requested for a case that is still open."""
