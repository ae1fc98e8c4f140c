"""Blame-based SZZ baseline, candidate filters and single-candidate selectors."""
from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, replace
from typing import Iterable

from .gitrepo import Repository


@dataclass(frozen=True)
class Candidate:
    commit: str
    commit_time: int
    touched_line_count: int = 0


@dataclass(frozen=True)
class CandidateSet:
    fc: str
    candidates: tuple[Candidate, ...] = ()

    def __post_init__(self):
        ordered = tuple(sorted(self.candidates, key=lambda c: (-c.commit_time, c.commit)))
        if len({c.commit for c in ordered}) != len(ordered):
            raise ValueError("duplicate candidate commits")
        if any(c.commit == self.fc for c in ordered):
            raise ValueError("the fix commit cannot be its own candidate")
        object.__setattr__(self, "candidates", ordered)

    def __len__(self):
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def commits(self) -> list[str]:
        return [c.commit for c in self.candidates]


@dataclass(frozen=True)
class FilterConfig:
    issue_filter_enabled: bool = True
    one_commit_filter_enabled: bool = False
    issue_date: int | None = None

    def __post_init__(self):
        if (self.issue_filter_enabled or self.one_commit_filter_enabled) and self.issue_date is None:
            raise ValueError("enabled filters need an issue date")


def bszz_candidates(repo: Repository, fc: str) -> CandidateSet:
    """Blame every removed or rewritten line of ``fc`` at its first parent."""
    meta = repo.commit_meta(fc)
    if not meta.parents:
        return CandidateSet(meta.id)
    parent = meta.parents[0]
    counts: Counter[str] = Counter()
    for fd in repo.diff_commit(meta.id):
        if fd.old_path is None or fd.binary:
            continue
        lines = fd.deleted_lines()
        if not lines:
            continue
        for attribution in repo.blame_lines(parent, fd.old_path, lines):
            counts[attribution.origin] += 1
    return CandidateSet(
        meta.id,
        tuple(Candidate(c, repo.commit_time(c), n) for c, n in counts.items()),
    )


def apply_issue_filter(candidates: CandidateSet, issue_date: int) -> CandidateSet:
    return replace(
        candidates, candidates=tuple(c for c in candidates if c.commit_time < issue_date)
    )


def _argmax(items: Iterable[Candidate], key) -> Candidate | None:
    best = None
    for c in items:
        if best is None or key(c) > key(best) or (key(c) == key(best) and c.commit < best.commit):
            best = c
    return best


def apply_one_commit_filter(candidates: CandidateSet, issue_date: int) -> str | None:
    """The single candidate nearest before the issue report, if any."""
    best = _argmax((c for c in candidates if c.commit_time < issue_date), lambda c: c.commit_time)
    return best.commit if best else None


def select_latest(candidates: CandidateSet) -> str | None:
    best = _argmax(candidates, lambda c: c.commit_time)
    return best.commit if best else None


def select_largest(candidates: CandidateSet) -> str | None:
    """Candidate blamed for the most lines; newer commit wins ties."""
    best = _argmax(candidates, lambda c: (c.touched_line_count, c.commit_time))
    return best.commit if best else None


FALLBACKS = ("b", "b-latest", "b-largest")


def run_fallback(candidates: CandidateSet, variant: str, filters: FilterConfig) -> list[str]:
    """Apply the configured filters, then the variant's selector."""
    if variant not in FALLBACKS:
        raise ValueError(f"unknown fallback {variant!r}")
    if filters.issue_filter_enabled:
        candidates = apply_issue_filter(candidates, filters.issue_date)
    if filters.one_commit_filter_enabled:
        one = apply_one_commit_filter(candidates, filters.issue_date)
        return [one] if one else []
    if variant == "b-latest":
        pick = select_latest(candidates)
        return [pick] if pick else []
    if variant == "b-largest":
        pick = select_largest(candidates)
        return [pick] if pick else []
    return candidates.commits()


# --------------------------------------------------------------------------
# candidate CSV (fc, candidate, commit_time, touched_line_count)

CANDIDATE_FIELDS = ["fc", "candidate", "commit_time", "touched_line_count"]


def candidates_to_csv(sets: Iterable[CandidateSet]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CANDIDATE_FIELDS)
    for cs in sets:
        for c in cs:
            writer.writerow([cs.fc, c.commit, c.commit_time, c.touched_line_count])
    return buf.getvalue()


def candidates_from_csv(text: str) -> dict[str, CandidateSet]:
    """Read a candidate dump, e.g. one produced by another SZZ implementation.

    ``touched_line_count`` is optional and defaults to 0.
    """
    grouped: dict[str, list[Candidate]] = {}
    for rec in csv.DictReader(io.StringIO(text)):
        fc = rec["fc"].strip().lower()
        grouped.setdefault(fc, [])
        if rec.get("candidate"):
            grouped[fc].append(
                Candidate(
                    rec["candidate"].strip().lower(),
                    int(rec["commit_time"]),
                    int(rec.get("touched_line_count") or 0),
                )
            )
    return {fc: CandidateSet(fc, tuple(cands)) for fc, cands in grouped.items()}
