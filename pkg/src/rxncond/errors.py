"""Custom exception hierarchy for rxncond."""

from __future__ import annotations


class RxnCondError(Exception):
    """Base exception for all rxncond errors."""


class ValidationError(RxnCondError):
    """Raised when a diagnostic promoted by the warning policy fires."""


# --- molecular graphs -------------------------------------------------------


class SmilesError(RxnCondError):
    """Raised when SMILES or SMARTS text cannot be parsed."""

    def __init__(self, message: str, position: int | None = None) -> None:
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class EmptyInput(SmilesError):
    """Raised for empty or whitespace-only input."""


class UnknownToken(SmilesError):
    """Raised when a character or bracket symbol is not in the grammar."""

    def __init__(self, token: str, position: int) -> None:
        self.token = token
        super().__init__(f"Unknown token {token!r}", position)


class UnclosedBranch(SmilesError):
    """Raised when a branch is opened and never closed, or closed without opening."""


class UnmatchedRingClosure(SmilesError):
    """Raised when a ring-closure digit has no partner."""


class ValenceUnderflow(SmilesError):
    """Raised when an atom's bonds exceed every allowed valence."""


class UnsupportedPrimitive(SmilesError):
    """Raised when SMARTS uses a primitive outside the supported subset."""

    def __init__(self, token: str, position: int | None = None) -> None:
        self.token = token
        super().__init__(f"Unsupported SMARTS primitive {token!r}", position)


class WidthMismatch(RxnCondError):
    """Raised when comparing fingerprints of different widths."""


# --- functional-group library ----------------------------------------------


class LibraryError(RxnCondError):
    """Raised when a functional-group or leaving-group table is invalid."""


class LibraryParseError(LibraryError):
    """Raised for a malformed library line."""

    def __init__(self, message: str, line: int) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}")


class DuplicateName(LibraryError):
    """Raised when two library entries share a name."""

    def __init__(self, name: str) -> None:
        self.name = name
        super().__init__(f"Duplicate library entry name: {name!r}")


# --- constraint engine ------------------------------------------------------


class BalanceError(RxnCondError):
    """Raised when stoichiometry or by-product analysis fails."""


class Unbalanceable(BalanceError):
    """Raised when no positive integer solution exists within the search bound."""


class EmptySide(BalanceError):
    """Raised when a reaction has no reactants or no products."""


class NegativeDifference(BalanceError):
    """Raised when products contain more of an element than reactants."""

    def __init__(self, deficits: dict[str, int]) -> None:
        self.deficits = dict(deficits)
        detail = ", ".join(f"{el}:{n}" for el, n in sorted(deficits.items()))
        super().__init__(f"Products exceed reactants in {detail} (missing reagent?)")


# --- knowledge base ---------------------------------------------------------


class KnowledgeBaseError(RxnCondError):
    """Raised for reaction-base ingest and query failures."""


class UnreadableSource(KnowledgeBaseError):
    """Raised when a record source cannot be opened or decoded."""


class DuplicateId(KnowledgeBaseError):
    """Raised when two records share an id."""

    def __init__(self, record_id: str) -> None:
        self.record_id = record_id
        super().__init__(f"Duplicate record id: {record_id!r}")


class EmptyBase(KnowledgeBaseError):
    """Raised when a query needs at least one record."""


class SnapshotError(KnowledgeBaseError):
    """Raised when an index snapshot has an unexpected header."""


# --- debate and selection ---------------------------------------------------


class DebateError(RxnCondError):
    """Raised for panel and tournament failures."""


class BackendUnavailable(DebateError):
    """Raised when a judge backend cannot produce a decision."""


class PoolTooSmall(DebateError):
    """Raised when the pool holds fewer candidates than the requested K."""


class SelectionError(RxnCondError):
    """Raised when final selection cannot be completed."""


class NotEnoughValid(SelectionError):
    """Raised when fewer valid candidates remain than recommendations requested."""

    def __init__(self, needed: int, valid: int, counts: dict[str, int]) -> None:
        self.needed = needed
        self.valid = valid
        self.counts = dict(counts)
        detail = ", ".join(f"{name}={n}" for name, n in sorted(counts.items()))
        super().__init__(
            f"Only {valid} valid candidate(s) for {needed} recommendation(s); "
            f"failed criteria: {detail or 'none'}"
        )


# --- training kit -----------------------------------------------------------


class TrainError(RxnCondError):
    """Raised by the toy training kit."""


class GroupTooSmall(TrainError):
    """Raised when a rollout group has fewer than two members."""


class ShapeMismatch(TrainError):
    """Raised when rollout arrays disagree in shape."""


# --- configuration and orchestration ---------------------------------------


class ConfigError(RxnCondError):
    """Raised when a pipeline config key is unknown or out of range."""

    def __init__(self, message: str, key: str | None = None) -> None:
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class MalformedTestSet(RxnCondError):
    """Raised when an evaluation test set cannot be read."""


class PipelineError(RxnCondError):
    """Wraps a stage failure with the stage name."""

    def __init__(self, stage: str, cause: RxnCondError) -> None:
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
