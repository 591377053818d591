"""Confidence-interval helpers used by all measurement reports."""

from __future__ import annotations

import math

Z99 = 2.5758293035489004  # two-sided 99% normal quantile


def wilson_interval(successes: int, n: int, z: float = Z99):
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        return 0.0, 1.0
    phat = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (phat + z2 / (2 * n)) / denom
    half = (z / denom) * math.sqrt(phat * (1 - phat) / n + z2 / (4 * n * n))
    return max(0.0, center - half), min(1.0, center + half)


def mean_interval(values, z: float = Z99):
    """Normal-approximation CI for a sample mean."""
    n = len(values)
    if n == 0:
        return 0.0, 0.0, 0.0
    mean = sum(values) / n
    if n == 1:
        return mean, mean, mean
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    half = z * math.sqrt(var / n)
    return mean, mean - half, mean + half


def binomial_se(phat: float, n: int) -> float:
    if n <= 0:
        return float("inf")
    return math.sqrt(max(phat * (1 - phat), 0.0) / n)
