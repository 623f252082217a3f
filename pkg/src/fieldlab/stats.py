"""Nonparametric statistics, built from first principles.

Mann-Whitney U uses midranks with tie-corrected variance; exact p-values by
enumeration when both samples are small, normal approximation with continuity
correction otherwise.  The two-sample Kolmogorov-Smirnov p-value is the
asymptotic Kolmogorov survival function evaluated at the Stephens
small-sample argument.  All functions are pure and deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import InsufficientSampleError, InvalidConfigError

EXACT_MAX_N = 8  # exact Mann-Whitney enumeration up to this per-sample size

ALTERNATIVES = ("two-sided", "greater", "less")


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    tails: int
    n1: int
    n2: int
    method: str

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise InvalidConfigError(f"p-value {self.p_value} outside [0, 1]")


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def rankdata_mid(values: Sequence[float]) -> np.ndarray:
    """Midranks (average rank for ties), 1-based."""
    a = np.asarray(values, dtype=float)
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(len(a), dtype=float)
    sorted_a = a[order]
    i = 0
    while i < len(a):
        j = i
        while j + 1 < len(a) and sorted_a[j + 1] == sorted_a[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _u_statistic(pooled_ranks: np.ndarray, n1: int) -> float:
    r1 = float(pooled_ranks[:n1].sum())
    return r1 - n1 * (n1 + 1) / 2.0


def _mwu_exact_p(pooled: np.ndarray, n1: int, u_obs: float, alternative: str) -> float:
    ranks = rankdata_mid(pooled)
    n = len(pooled)
    total = math.comb(n, n1)
    offset = n1 * (n1 + 1) / 2.0
    ge = le = 0
    eps = 1e-9
    for idx in combinations(range(n), n1):
        u = ranks[list(idx)].sum() - offset
        if u >= u_obs - eps:
            ge += 1
        if u <= u_obs + eps:
            le += 1
    if alternative == "greater":
        return ge / total
    if alternative == "less":
        return le / total
    return min(1.0, 2.0 * min(ge, le) / total)


def mann_whitney_u(a: Sequence[float], b: Sequence[float], alternative: str = "two-sided") -> TestResult:
    """Rank-sum test; the statistic is U for sample ``a``.

    ``alternative="greater"`` means a tends larger than b.  Exact enumeration
    when max(n1, n2) <= 8, else normal approximation with tie-corrected
    variance and continuity correction.
    """
    if alternative not in ALTERNATIVES:
        raise InvalidConfigError(f"alternative must be one of {ALTERNATIVES}")
    n1, n2 = len(a), len(b)
    if n1 == 0 or n2 == 0:
        raise InvalidConfigError("both samples must be nonempty")
    pooled = np.concatenate([np.asarray(a, dtype=float), np.asarray(b, dtype=float)])
    ranks = rankdata_mid(pooled)
    u = _u_statistic(ranks, n1)
    tails = 2 if alternative == "two-sided" else 1

    if max(n1, n2) <= EXACT_MAX_N:
        p = _mwu_exact_p(pooled, n1, u, alternative)
        return TestResult(statistic=u, p_value=p, tails=tails, n1=n1, n2=n2, method="exact")

    n = n1 + n2
    mu = n1 * n2 / 2.0
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float((counts.astype(float) ** 3 - counts).sum())
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0:  # all values identical
        return TestResult(statistic=u, p_value=1.0, tails=tails, n1=n1, n2=n2, method="normal")
    sd = math.sqrt(var)
    if alternative == "greater":
        p = _normal_sf((u - mu - 0.5) / sd)
    elif alternative == "less":
        p = _normal_sf((mu - u - 0.5) / sd)
    else:
        p = min(1.0, 2.0 * _normal_sf((abs(u - mu) - 0.5) / sd))
    return TestResult(statistic=u, p_value=p, tails=tails, n1=n1, n2=n2, method="normal")


def kolmogorov_sf(x: float) -> float:
    """Survival function of the Kolmogorov distribution."""
    if x < 1.18:
        # Jacobi theta form converges fast for small x
        if x <= 0:
            return 1.0
        t = math.exp(-math.pi**2 / (8.0 * x * x))
        series = t * (1.0 + t**8 * (1.0 + t**16))
        return max(0.0, 1.0 - math.sqrt(2.0 * math.pi) / x * series)
    total = 0.0
    sign = 1.0
    for j in range(1, 101):
        term = math.exp(-2.0 * j * j * x * x)
        total += sign * term
        if term < 1e-16:
            break
        sign = -sign
    return max(0.0, min(1.0, 2.0 * total))


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Two-sample KS: D = sup |ECDF_a - ECDF_b|, asymptotic two-sided p."""
    n1, n2 = len(a), len(b)
    if n1 == 0 or n2 == 0:
        raise InvalidConfigError("both samples must be nonempty")
    xa = np.sort(np.asarray(a, dtype=float))
    xb = np.sort(np.asarray(b, dtype=float))
    grid = np.concatenate([xa, xb])
    cdf_a = np.searchsorted(xa, grid, side="right") / n1
    cdf_b = np.searchsorted(xb, grid, side="right") / n2
    d = float(np.abs(cdf_a - cdf_b).max())
    en = math.sqrt(n1 * n2 / (n1 + n2))
    p = kolmogorov_sf((en + 0.12 + 0.11 / en) * d)
    return TestResult(statistic=d, p_value=p, tails=2, n1=n1, n2=n2, method="ks_asymptotic")


def kl_divergence(p: Sequence[float], q: Sequence[float], smoothing: float = 1e-9) -> float:
    """KL(p || q) in nats after additive smoothing and renormalization."""
    pa = np.asarray(p, dtype=float)
    qa = np.asarray(q, dtype=float)
    if pa.shape != qa.shape or pa.ndim != 1:
        raise InvalidConfigError("distributions must share one-dimensional support")
    if (pa < 0).any() or (qa < 0).any():
        raise InvalidConfigError("distributions must be nonnegative")
    for name, arr in (("p", pa), ("q", qa)):
        if abs(arr.sum() - 1.0) > 1e-9:
            raise InvalidConfigError(f"{name} must sum to 1 within 1e-9, got {arr.sum()}")
    ps = (pa + smoothing) / (pa + smoothing).sum()
    qs = (qa + smoothing) / (qa + smoothing).sum()
    return float(np.sum(ps * np.log(ps / qs)))


def dagostino_pearson(x: Sequence[float]) -> TestResult:
    """Omnibus normality test combining skewness and kurtosis z-scores;
    K^2 is chi-square with 2 degrees of freedom under normality."""
    a = np.asarray(x, dtype=float)
    n = len(a)
    if n < 20:
        raise InsufficientSampleError(f"need at least 20 observations, got {n}")
    m = a.mean()
    d = a - m
    m2 = float((d**2).mean())
    if m2 == 0:
        raise InvalidConfigError("sample is constant")
    m3 = float((d**3).mean())
    m4 = float((d**4).mean())

    # skewness transform (D'Agostino)
    g1 = m3 / m2**1.5
    y = g1 * math.sqrt((n + 1) * (n + 3) / (6.0 * (n - 2)))
    beta2 = 3.0 * (n**2 + 27 * n - 70) * (n + 1) * (n + 3) / ((n - 2) * (n + 5) * (n + 7) * (n + 9))
    w2 = -1.0 + math.sqrt(2.0 * (beta2 - 1.0))
    delta = 1.0 / math.sqrt(math.log(math.sqrt(w2)))
    alpha = math.sqrt(2.0 / (w2 - 1.0))
    y_a = y / alpha
    z_skew = delta * math.log(y_a + math.sqrt(y_a * y_a + 1.0))

    # kurtosis transform (Anscombe-Glynn)
    b2 = m4 / (m2 * m2)
    mean_b2 = 3.0 * (n - 1) / (n + 1)
    var_b2 = 24.0 * n * (n - 2) * (n - 3) / ((n + 1) ** 2 * (n + 3) * (n + 5))
    xk = (b2 - mean_b2) / math.sqrt(var_b2)
    sqrt_beta1 = (
        6.0 * (n * n - 5 * n + 2) / ((n + 7) * (n + 9)) * math.sqrt(6.0 * (n + 3) * (n + 5) / (n * (n - 2) * (n - 3)))
    )
    big_a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + math.sqrt(1.0 + 4.0 / sqrt_beta1**2))
    inner = (1.0 - 2.0 / big_a) / (1.0 + xk * math.sqrt(2.0 / (big_a - 4.0)))
    z_kurt = ((1.0 - 2.0 / (9.0 * big_a)) - math.copysign(abs(inner) ** (1.0 / 3.0), inner)) / math.sqrt(
        2.0 / (9.0 * big_a)
    )

    k2 = z_skew * z_skew + z_kurt * z_kurt
    p = math.exp(-k2 / 2.0)  # chi-square sf with 2 df
    return TestResult(statistic=k2, p_value=p, tails=2, n1=n, n2=0, method="k2")


@dataclass(frozen=True)
class Descriptive:
    mean: float
    median: float
    sd: float
    min: float
    max: float
    n: int


def descriptive(x: Sequence[float]) -> Descriptive:
    """Summary tuple; sd uses the n-1 denominator, median the midpoint rule."""
    a = np.asarray(x, dtype=float)
    if len(a) == 0:
        raise InvalidConfigError("empty sample")
    sd = float(a.std(ddof=1)) if len(a) > 1 else 0.0
    return Descriptive(
        mean=float(a.mean()),
        median=float(np.median(a)),
        sd=sd,
        min=float(a.min()),
        max=float(a.max()),
        n=len(a),
    )
