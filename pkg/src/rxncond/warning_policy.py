"""Coded diagnostics for the reasoning pipeline.

Every non-fatal anomaly the pipeline tolerates is reported under a W-code so that runs
can promote it to an error (``--warn-as-error``) or silence it (``--suppress-warning``).
Diagnostics emitted while building a reaction report are also collected into the report
itself through a ``DiagnosticSink``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

from rxncond.errors import ValidationError

CODE_DESCRIPTIONS: dict[str, str] = {
    "W01": "stereo or isotope annotation ignored",
    "W02": "malformed record skipped at ingest",
    "W03": "judge backend failed, counted as abstention",
    "W04": "MCS budget exhausted, approximate mapping used",
    "W05": "reaction not balanceable within the coefficient bound",
}

KNOWN_CODES: frozenset[str] = frozenset(CODE_DESCRIPTIONS)


class RxnCondWarning(UserWarning):
    """Warning with a machine-readable code."""

    def __init__(self, code: str, message: str) -> None:
        self.code = code
        super().__init__(f"[{code}] {message}")


@dataclass(frozen=True)
class WarningPolicy:
    """Controls how individual warning codes are handled."""

    warn_as_error: frozenset[str] = frozenset()
    suppress: frozenset[str] = frozenset()

    @classmethod
    def from_options(cls, warn_as_error: str | None, suppress: str | None) -> WarningPolicy | None:
        """Build a policy from comma-separated CLI values, or None when both are unset."""
        if warn_as_error is None and suppress is None:
            return None
        return cls(
            warn_as_error=parse_code_list(warn_as_error) if warn_as_error else frozenset(),
            suppress=parse_code_list(suppress) if suppress else frozenset(),
        )


@dataclass
class DiagnosticSink:
    """Collects (code, message) pairs in emission order."""

    entries: list[tuple[str, str]] = field(default_factory=list)

    def codes(self) -> list[str]:
        return [code for code, _ in self.entries]


def emit_warning(
    code: str,
    message: str,
    *,
    policy: WarningPolicy | None = None,
    sink: DiagnosticSink | None = None,
) -> None:
    """Emit a coded diagnostic, respecting the active policy.

    Suppressed codes are dropped entirely (not recorded in the sink). Codes in
    ``policy.warn_as_error`` raise ``ValidationError``. Anything else is recorded in
    ``sink`` when given and issued as a ``RxnCondWarning``.
    """
    if code not in KNOWN_CODES:
        raise ValueError(f"Unknown warning code: {code!r}")
    if policy is not None:
        if code in policy.suppress:
            return
        if code in policy.warn_as_error:
            raise ValidationError(f"[{code}] {message}")

    if sink is not None:
        sink.entries.append((code, message))
    warnings.warn(RxnCondWarning(code, message), stacklevel=2)


def parse_code_list(raw: str) -> frozenset[str]:
    """Parse a comma-separated string of W-codes and validate them.

    Raises ``ValueError`` for unknown codes.
    """
    codes: set[str] = set()
    for token in raw.split(","):
        token = token.strip()
        if not token:
            continue
        if token not in KNOWN_CODES:
            raise ValueError(f"Unknown warning code: {token!r} (known: {sorted(KNOWN_CODES)})")
        codes.add(token)
    return frozenset(codes)
