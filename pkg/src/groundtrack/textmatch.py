"""Fuzzy keyword matching on Levenshtein distance.

One rule serves everywhere a noisy model output must be snapped onto a known
keyword set: a value matches a target keyword when their case-insensitive
edit distance is at most max(1, len(target) // 4). Exact matches are
distance 0 and always accepted.
"""

from __future__ import annotations

from typing import Sequence


def levenshtein(a: str, b: str) -> int:
    """Edit distance (insert/delete/substitute, unit cost), case-sensitive."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    # Two-row DP over the shorter string to bound memory.
    if len(b) > len(a):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost))
        prev = cur
    return prev[-1]


def match_threshold(target: str) -> int:
    """Maximum accepted distance for snapping a value onto `target`."""
    return max(1, len(target) // 4)


def match_keyword(value: str, allowed: Sequence[str]) -> str | None:
    """Snap `value` onto the closest keyword in `allowed`, or None.

    Comparison is case-insensitive. A candidate is accepted when its distance
    is within match_threshold of that keyword; among accepted candidates the
    smallest distance wins, ties going to the earlier keyword in `allowed`.
    """
    needle = value.strip().lower()
    best: str | None = None
    best_dist: int | None = None
    for keyword in allowed:
        dist = levenshtein(needle, keyword.strip().lower())
        if dist > match_threshold(keyword):
            continue
        if best_dist is None or dist < best_dist:
            best = keyword
            best_dist = dist
    return best
