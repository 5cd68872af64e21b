from __future__ import annotations

from dataclasses import dataclass, field

# byte-size model for overhead reporting
EXT_HEADER_BYTES = 20
EXT_RECORD_BYTES = 8
PIGGY_BASE_BYTES = 500
PIGGY_ENTRY_BYTES = 12


@dataclass
class StalenessAudit:
    """Counts every density record an estimator consumes and flags any that are too old."""

    checks: int = 0
    violations: list[tuple[str, float, float]] = field(default_factory=list)

    def consume(self, what: str, age: float, limit: float) -> None:
        self.checks += 1
        if age > limit + 1e-9:
            self.violations.append((what, age, limit))


def audit_consume(audit: StalenessAudit | None, what: str, age: float, limit: float) -> None:
    if audit is not None:
        audit.consume(what, age, limit)
