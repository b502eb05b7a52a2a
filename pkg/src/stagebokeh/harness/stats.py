from __future__ import annotations

from math import comb
from typing import Sequence


def sign_test_greater(treatment: Sequence[float], control: Sequence[float]) -> tuple[float, int, int]:
    """One-sided exact sign test for ``treatment > control``.

    Ties are dropped. Returns ``(p_value, wins, n_untied)``; with no untied
    pairs the p-value is 1.
    """
    if len(treatment) != len(control):
        raise ValueError("paired samples must have equal length")
    diffs = [a - b for a, b in zip(treatment, control)]
    wins = sum(d > 0 for d in diffs)
    n = sum(d != 0 for d in diffs)
    if n == 0:
        return 1.0, 0, 0
    p = sum(comb(n, k) for k in range(wins, n + 1)) / 2**n
    return p, wins, n
