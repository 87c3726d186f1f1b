"""Nonparametric post-hoc tests for forced-choice trial data.

Two tests, both exact where exactness is affordable:

* ``binomial_test`` -- two-sided exact binomial against a null success
  probability, using the minimum-likelihood tie rule: the p-value is the
  total probability of every outcome whose point probability does not
  exceed that of the observed count.

* ``wilcoxon_signed_rank`` -- paired-sample signed-rank test.  Zero
  differences are discarded, tied magnitudes receive midranks, and the
  null distribution of the positive-rank sum is computed exactly (by
  counting over all sign assignments of the observed ranks) up to 20
  non-zero pairs.  Larger samples fall back to the normal approximation
  with the usual tie variance correction and no continuity correction.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

__all__ = ["WilcoxonResult", "binomial_test", "wilcoxon_signed_rank"]

# Outcomes whose pmf exceeds the observed pmf by less than this relative
# slack still count as "at most as likely": float pmf evaluation is not
# exact, and the symmetric partner of the observed count must not drop
# out of the tail over a 1-ulp wobble.
_TIE_RTOL = 1e-7

# Exact sign-assignment counting is 2**n work; past 20 pairs the normal
# approximation is good to three decimals and the exact count is not.
_EXACT_LIMIT = 20


def _binom_pmf(n: int, p0: float) -> list[float]:
    # Multiplicative recurrence from the k=0 term, in log space so that
    # n in the hundreds with extreme p0 does not underflow mid-run.
    logp, logq = math.log(p0), math.log1p(-p0)
    out = []
    for k in range(n + 1):
        lg = (
            math.lgamma(n + 1)
            - math.lgamma(k + 1)
            - math.lgamma(n - k + 1)
            + k * logp
            + (n - k) * logq
        )
        out.append(math.exp(lg))
    return out


def binomial_test(successes: int, n: int, p0: float = 0.5) -> float:
    """Two-sided exact binomial p-value for ``successes`` out of ``n``.

    ``p0`` is the null per-trial success probability.  Returns the sum
    of P(X = k) over every k whose point probability is at most that of
    the observed count (the minimum-likelihood two-sided convention).
    """
    if not isinstance(successes, int) or not isinstance(n, int):
        raise TypeError("successes and n must be integers")
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if not 0 <= successes <= n:
        raise ValueError(f"successes must lie in [0, {n}], got {successes}")
    if not 0.0 < p0 < 1.0:
        raise ValueError(f"p0 must lie in (0, 1), got {p0}")

    pmf = _binom_pmf(n, p0)
    cutoff = pmf[successes] * (1.0 + _TIE_RTOL)
    kept = [q for q in pmf if q <= cutoff]
    if len(kept) == n + 1:
        # Every outcome qualifies (the observed count is modal), so the
        # answer is exactly one; do not let float summation shave it.
        return 1.0
    # Summing the small terms first keeps the accumulation error below
    # the 1e-10 agreement the exact-summation oracle is held to.
    return min(1.0, sum(sorted(kept)))


@dataclass(frozen=True)
class WilcoxonResult:
    """Outcome of a signed-rank test.

    ``statistic`` is min(W+, W-); ``w_plus`` the positive-rank sum the
    null distribution is evaluated at; ``n_used`` the pair count after
    discarding zero differences; ``method`` is "exact" or "normal".
    """

    statistic: float
    p_value: float
    w_plus: float
    n_used: int
    method: str


def _midranks(magnitudes: Sequence[float]) -> list[float]:
    n = len(magnitudes)
    order = sorted(range(n), key=lambda i: magnitudes[i])
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and magnitudes[order[j + 1]] == magnitudes[order[i]]:
            j += 1
        mid = 0.5 * ((i + 1) + (j + 1))
        for t in range(i, j + 1):
            ranks[order[t]] = mid
        i = j + 1
    return ranks


def _exact_p_two_sided(double_ranks: Sequence[int], w_plus_doubled: int) -> float:
    # Count sign assignments by their doubled positive-rank sum.  The
    # polynomial product of (1 + x**r) over the doubled ranks gives the
    # full null distribution in O(n * total) integer adds.
    total = sum(double_ranks)
    counts = [0] * (total + 1)
    counts[0] = 1
    top = 0
    for r in double_ranks:
        top += r
        for w in range(top, r - 1, -1):
            counts[w] += counts[w - r]
    n_assign = 1 << len(double_ranks)
    le = sum(counts[: w_plus_doubled + 1])
    ge = sum(counts[w_plus_doubled:])
    # Doubling the smaller tail equals summing both symmetric tails
    # because flipping every sign maps W+ to total - W+.
    return min(1.0, 2.0 * min(le, ge) / n_assign)


def wilcoxon_signed_rank(pairs: Sequence[Sequence[float]]) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    ``pairs`` is a sequence of (x, y) pairs; the test is on d = x - y.
    Requires at least 6 non-zero differences.  Up to 20 of them the
    p-value is exact (sign-assignment count over the observed midranks);
    beyond that the normal approximation with tie correction is used.
    """
    diffs = []
    for entry in pairs:
        x, y = entry
        d = float(x) - float(y)
        if not math.isfinite(d):
            raise ValueError("pairs must contain finite values")
        if d != 0.0:
            diffs.append(d)
    if not diffs and len(pairs) > 0:
        raise ValueError("all differences are zero; no signed ranks to test")
    if len(diffs) < 6:
        raise ValueError(
            f"need at least 6 non-zero differences, got {len(diffs)}"
        )

    n = len(diffs)
    ranks = _midranks([abs(d) for d in diffs])
    w_plus = sum(r for r, d in zip(ranks, diffs) if d > 0)
    total = n * (n + 1) / 2.0
    statistic = min(w_plus, total - w_plus)

    if n <= _EXACT_LIMIT:
        # Midranks are multiples of 1/2, so doubled ranks are exact ints.
        double_ranks = [int(round(2.0 * r)) for r in ranks]
        p = _exact_p_two_sided(double_ranks, int(round(2.0 * w_plus)))
        return WilcoxonResult(statistic, p, w_plus, n, "exact")

    mean = n * (n + 1) / 4.0
    tie_groups = Counter(ranks).values()
    tie_term = sum(c**3 - c for c in tie_groups) / 48.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    if var <= 0.0:
        # Every magnitude tied in one group only happens for tiny n,
        # which the exact branch already covers; guard anyway.
        raise ValueError("degenerate rank variance")
    z = (w_plus - mean) / math.sqrt(var)
    p = min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))
    return WilcoxonResult(statistic, p, w_plus, n, "normal")
