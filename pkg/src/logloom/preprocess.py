"""Stream cleanup: repeat coalescing and noise removal."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .ingest import CanonicalEvent


@dataclass(frozen=True)
class CoalescePolicy:
    """Repeats of one (node, dim, template) stream within `gap` seconds merge."""

    gap: float = 5.0

    def __post_init__(self) -> None:
        if self.gap <= 0:
            raise ValueError("gap must be > 0")


@dataclass(frozen=True)
class NoisePolicy:
    """Template blacklist plus an optional per-stream rate ceiling.

    `max_rate` is in events per hour per (node, template); None disables
    the rate check.
    """

    blacklist: frozenset[int] = frozenset()
    max_rate: float | None = None

    def __post_init__(self) -> None:
        if self.max_rate is not None and self.max_rate <= 0:
            raise ValueError("max_rate must be > 0")


@dataclass
class NoiseReport:
    blacklist_dropped: int = 0
    rate_dropped: int = 0
    rate_check_skipped: bool = False
    noisy_streams: tuple[tuple[str, int], ...] = ()

    def render(self) -> str:
        lines = [
            f"noise/blacklist: dropped {self.blacklist_dropped} events",
            f"noise/rate: dropped {self.rate_dropped} events"
            f" across {len(self.noisy_streams)} streams",
        ]
        if self.rate_check_skipped:
            lines.append("noise/rate: skipped (zero trace duration)")
        return "\n".join(lines)


def coalesce(events: Sequence[CanonicalEvent], policy: CoalescePolicy) -> list[CanonicalEvent]:
    """Merge bursts of identical events into their first occurrence.

    Within each (node, dim, template) stream, an event lands on the last
    kept representative when their gap is at most `policy.gap` seconds;
    the representative accumulates the merged repeat counts. Gaps are
    measured against the kept event, not the previous raw event, so a
    slow drizzle cannot chain into one giant merge. Requires `events`
    globally sorted; output order is preserved.
    """
    kept: list[CanonicalEvent] = []
    last_kept: dict[tuple[str, int, int], int] = {}
    for ev in events:
        key = (ev.node, ev.dim.rank, ev.template)
        idx = last_kept.get(key)
        if idx is not None and ev.ts - kept[idx].ts <= policy.gap:
            rep = kept[idx]
            kept[idx] = replace(rep, count=rep.count + ev.count)
        else:
            last_kept[key] = len(kept)
            kept.append(ev)
    return kept


def filter_noise(
    events: Sequence[CanonicalEvent], policy: NoisePolicy
) -> tuple[list[CanonicalEvent], NoiseReport]:
    """Drop blacklisted templates, then entire streams that run too hot.

    A stream is one (node, template) pair; its rate is the sum of repeat
    counts divided by the surviving trace duration in hours, so
    coalescing beforehand does not hide a chatty stream. The rate rule
    is all-or-nothing: a stream over `max_rate` loses every event.
    Removal repeats until stable, because dropping the streams that
    bracket the trace shrinks the duration and can push further streams
    over the ceiling; the fixpoint makes the whole operation idempotent.
    With fewer than two distinct timestamps the duration is zero and the
    rate check is skipped (flagged in the report).
    """
    report = NoiseReport()
    kept = [ev for ev in events if ev.template not in policy.blacklist]
    report.blacklist_dropped = len(events) - len(kept)

    if policy.max_rate is None:
        return kept, report

    if not kept or kept[-1].ts <= kept[0].ts:
        report.rate_check_skipped = True
        return kept, report

    noisy: set[tuple[str, int]] = set()
    while kept and kept[-1].ts > kept[0].ts:
        duration_h = (kept[-1].ts - kept[0].ts) / 3600.0
        totals: dict[tuple[str, int], int] = {}
        for ev in kept:
            key = (ev.node, ev.template)
            totals[key] = totals.get(key, 0) + ev.count
        over = {key for key, total in totals.items() if total / duration_h > policy.max_rate}
        if not over:
            break
        noisy |= over
        kept = [ev for ev in kept if (ev.node, ev.template) not in over]

    report.rate_dropped = len(events) - report.blacklist_dropped - len(kept)
    report.noisy_streams = tuple(sorted(noisy))
    return kept, report


def load_blacklist(path: str | Path) -> frozenset[int]:
    """Read template ids from a text file, one per line, '#' comments allowed."""
    ids: set[int] = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        text = line.split("#", 1)[0].strip()
        if text:
            ids.add(int(text))
    return frozenset(ids)
