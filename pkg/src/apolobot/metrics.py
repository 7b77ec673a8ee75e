"""Outcome classification, funnel reporting, and recidivism counts.

These read-only views answer "what happened": how far cases travel
through the pipeline, where they drop, and how often the same offender
comes back.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Sequence

from .errors import NonTerminalCase
from .model import (
    STAGE_ORDER,
    CaseState,
    ClosureReason,
    MediationCase,
    stage_index,
    to_rfc3339,
)


@dataclass(frozen=True)
class OutcomeClass:
    """Terminal classification: full_restoration, partial_engagement
    (carrying the furthest stage), no_engagement, or punitive_fallback
    (carrying the closure reason)."""

    label: str
    furthest_stage: CaseState | None = None
    reason: ClosureReason | None = None

    def to_dict(self) -> dict:
        out = {"label": self.label}
        if self.furthest_stage is not None:
            out["furthest_stage"] = self.furthest_stage.value
        if self.reason is not None:
            out["reason"] = self.reason.value
        return out


FULL_RESTORATION = "full_restoration"
PARTIAL_ENGAGEMENT = "partial_engagement"
NO_ENGAGEMENT = "no_engagement"
PUNITIVE_FALLBACK = "punitive_fallback"

_NO_ENGAGEMENT_REASONS = frozenset(
    {ClosureReason.VICTIM_DECLINED, ClosureReason.VICTIM_TIMEOUT}
)


def classify_outcome(case: MediationCase) -> OutcomeClass:
    """Total classification of a terminal case.

    A case that never left the first stage is no_engagement when the victim
    opted out (decline or silence) and punitive_fallback when something
    external ended it there (cancel, mute running out). Anything that got
    further but did not restore counts as partial engagement at the
    furthest stage reached.
    """
    if not case.terminal:
        raise NonTerminalCase(f"case {case.case_id} is still in {case.state.value}")
    if case.state is CaseState.RESOLVED_RESTORED:
        return OutcomeClass(FULL_RESTORATION)
    closure = case.closure
    if closure.furthest_stage is CaseState.AWAIT_VICTIM_REQUEST:
        if closure.reason in _NO_ENGAGEMENT_REASONS:
            return OutcomeClass(NO_ENGAGEMENT)
        return OutcomeClass(PUNITIVE_FALLBACK, reason=closure.reason)
    return OutcomeClass(PARTIAL_ENGAGEMENT, furthest_stage=closure.furthest_stage)


@dataclass
class StageFunnel:
    stage: CaseState
    entered: int = 0
    advanced: int = 0
    dropped: int = 0
    drop_reasons: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "stage": self.stage.value,
            "entered": self.entered,
            "advanced": self.advanced,
            "dropped": self.dropped,
            "drop_reasons": dict(sorted(self.drop_reasons.items())),
        }


@dataclass
class FunnelReport:
    stages: list[StageFunnel]
    total_cases: int
    restored: int

    @property
    def restoration_rate(self) -> float:
        return self.restored / self.total_cases if self.total_cases else 0.0

    def to_dict(self) -> dict:
        return {
            "total_cases": self.total_cases,
            "restored": self.restored,
            "restoration_rate": self.restoration_rate,
            "stages": [s.to_dict() for s in self.stages],
        }


def funnel(cases: Sequence[MediationCase]) -> FunnelReport:
    """Per-stage entered/advanced/dropped counts over terminal cases.

    Stages form the fixed workflow order; cases that skip the review stage
    pass through its row untouched, which keeps the conservation rule
    entered(k+1) == advanced(k) exact for mixed cohorts.
    """
    for case in cases:
        if not case.terminal:
            raise NonTerminalCase(f"case {case.case_id} is still open")
    stages = [StageFunnel(stage) for stage in STAGE_ORDER]
    restored = 0
    for case in cases:
        if case.state is CaseState.RESOLVED_RESTORED:
            restored += 1
            drop_at = None
        else:
            drop_at = stage_index(case.closure.furthest_stage)
        for i, row in enumerate(stages):
            if drop_at is None:  # restored: travelled the whole pipeline
                row.entered += 1
                row.advanced += 1
            elif i < drop_at:
                row.entered += 1
                row.advanced += 1
            elif i == drop_at:
                row.entered += 1
                row.dropped += 1
                reason = case.closure.reason.value
                row.drop_reasons[reason] = row.drop_reasons.get(reason, 0) + 1
            else:
                break
    return FunnelReport(stages=stages, total_cases=len(cases), restored=restored)


def recidivism(
    cases: Iterable[MediationCase],
    offender_id: str,
    window_start: datetime | None = None,
    window_end: datetime | None = None,
) -> int:
    """Cases naming the user as offender inside the window.

    Restored and punitive cases both count: a new case is new harm,
    whatever the previous one ended as.
    """
    count = 0
    for case in cases:
        if case.offender_id != offender_id:
            continue
        if window_start and case.created_at < window_start:
            continue
        if window_end and case.created_at >= window_end:
            continue
        count += 1
    return count


def satisfaction_means(cases: Iterable[MediationCase]) -> dict[str, dict[str, float]]:
    """Mean 1..5 rating per role per outcome class, over recorded ratings."""
    sums: dict[tuple[str, str], list[int]] = {}
    for case in cases:
        if not case.terminal or not case.satisfaction:
            continue
        label = classify_outcome(case).label
        for role, rating in case.satisfaction:
            sums.setdefault((label, role), []).append(rating)
    out: dict[str, dict[str, float]] = {}
    for (label, role), ratings in sorted(sums.items()):
        out.setdefault(label, {})[role] = sum(ratings) / len(ratings)
    return out


# --- export -----------------------------------------------------------------

FUNNEL_CSV_COLUMNS = ["stage", "entered", "advanced", "dropped", "drop_reasons"]


def funnel_to_csv(report: FunnelReport) -> str:
    """CSV rendering; drop_reasons is a semicolon-joined reason=count list."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FUNNEL_CSV_COLUMNS)
    for row in report.stages:
        reasons = ";".join(f"{k}={v}" for k, v in sorted(row.drop_reasons.items()))
        writer.writerow([row.stage.value, row.entered, row.advanced, row.dropped, reasons])
    writer.writerow([])
    writer.writerow(["total_cases", report.total_cases])
    writer.writerow(["restored", report.restored])
    writer.writerow(["restoration_rate", f"{report.restoration_rate:.6f}"])
    return buf.getvalue()


def export_report(
    cases: Sequence[MediationCase],
    window_start: datetime | None = None,
    window_end: datetime | None = None,
) -> dict:
    """Combined funnel + recidivism export over a created_at window."""
    selected = [
        c
        for c in cases
        if c.terminal
        and (window_start is None or c.created_at >= window_start)
        and (window_end is None or c.created_at < window_end)
    ]
    offenders = sorted({c.offender_id for c in selected})
    return {
        "window": {
            "start": to_rfc3339(window_start) if window_start else None,
            "end": to_rfc3339(window_end) if window_end else None,
        },
        "funnel": funnel(selected).to_dict(),
        "recidivism": {
            offender: recidivism(selected, offender) for offender in offenders
        },
        "satisfaction_means": satisfaction_means(selected),
        "outcomes": _outcome_histogram(selected),
    }


def _outcome_histogram(cases: Sequence[MediationCase]) -> dict[str, int]:
    hist: dict[str, int] = {}
    for case in cases:
        label = classify_outcome(case).label
        hist[label] = hist.get(label, 0) + 1
    return dict(sorted(hist.items()))


def export_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
