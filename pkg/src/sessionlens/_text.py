"""Tokenization, host extraction and activity-window arithmetic."""
from __future__ import annotations

import re
from typing import Iterable
from urllib.parse import urlsplit

_NON_ALNUM = re.compile(r"[\W_]+")

DEFAULT_IDLE_WINDOW_S = 30.0


def tokenize(text: str) -> list[str]:
    """Lowercase ``text`` and split it on runs of non-alphanumeric characters.

    >>> tokenize("sun-tzu's art")
    ['sun', 'tzu', 's', 'art']
    """
    return [tok for tok in _NON_ALNUM.split(text.lower()) if tok]


def url_domain(url: str) -> str:
    """Host of ``url`` without a leading ``www.``; empty string if absent."""
    try:
        host = urlsplit(url).hostname or ""
    except ValueError:
        return ""
    host = host.lower()
    if host.startswith("www."):
        host = host[4:]
    return host


def active_time(
    enter_ms: int,
    exit_ms: int,
    interaction_ms: Iterable[int],
    idle_window_s: float = DEFAULT_IDLE_WINDOW_S,
) -> float:
    """Seconds of ``[enter, exit]`` covered by activity windows.

    The load itself at ``enter_ms`` and every interaction inside the visit
    each open a window of ``idle_window_s`` seconds. The result is the measure
    of the union of those windows clipped to the visit.
    """
    if exit_ms < enter_ms:
        raise ValueError("visit exit precedes enter")
    window = idle_window_s * 1000.0
    starts = sorted({enter_ms, *(t for t in interaction_ms if enter_ms <= t <= exit_ms)})
    covered = 0.0
    cur_lo = cur_hi = None
    for t in starts:
        hi = min(t + window, exit_ms)
        if cur_hi is None or t > cur_hi:
            if cur_hi is not None:
                covered += cur_hi - cur_lo
            cur_lo, cur_hi = t, hi
        else:
            cur_hi = max(cur_hi, hi)
    if cur_hi is not None:
        covered += cur_hi - cur_lo
    return covered / 1000.0
