"""Analytical models: ticket quality, memory-traffic speedup, kernel MSE.

Quality of a sparsity pattern is the expected per-row share of p-th-power
attention mass it keeps, assuming i.i.d. Gaussian scores. Speedups are
ratios of memory-access counts under the tiling model; matrix multiplies
at these shapes are bandwidth-bound, so traffic stands in for latency.
Closed forms are validated by the seeded Monte-Carlo estimators next to
them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codec import PruneMask, SparsityMode
from .dense import DenseMatrix

SQRT_PI = math.sqrt(math.pi)

#: Task exponent anchor: quality curves ordered by observed task accuracy
#: line up around p = 6.5 for extractive QA.
DEFAULT_TASK_EXPONENT = 6.5

_MC_MIN_SAMPLES = 100_000
_MC_CHUNK = 1 << 20


# ---------------------------------------------------------------------------
# Error function pair


def erf(x: float) -> float:
    """Gauss error function (machine precision, well under 1.5e-7)."""
    return math.erf(x)


def erfinv(y: float) -> float:
    """Inverse error function on (-1, 1).

    Polynomial initial guess refined by Newton; the tail branch iterates
    against erfc, where ``erf(x) - y`` would cancel, and bootstraps from
    the erfc asymptotic once y leaves the polynomial's fitted range.
    Agrees with reference implementations to a few ulps across the domain.
    """
    if not -1.0 < y < 1.0:
        raise ValueError(f"erfinv domain is (-1, 1), got {y}")
    if y == 0.0:
        return 0.0
    if y < 0.0:
        return -erfinv(-y)
    w = -math.log((1.0 - y) * (1.0 + y))
    if w < 5.0:
        # central-branch polynomial (Giles 2010), ~1e-7 before refinement
        w -= 2.5
        p = 2.81022636e-08
        p = 3.43273939e-07 + p * w
        p = -3.5233877e-06 + p * w
        p = -4.39150654e-06 + p * w
        p = 0.00021858087 + p * w
        p = -0.00125372503 + p * w
        p = -0.00417768164 + p * w
        p = 0.246640727 + p * w
        p = 1.50140941 + p * w
    else:
        w = math.sqrt(w) - 3.0
        p = -0.000200214257
        p = 0.000100950558 + p * w
        p = 0.00134934322 + p * w
        p = -0.00367342844 + p * w
        p = 0.00573950773 + p * w
        p = -0.0076224613 + p * w
        p = 0.00943887047 + p * w
        p = 1.00167406 + p * w
        p = 2.83297682 + p * w
    x = p * y
    if y <= 0.5:
        for _ in range(3):
            x -= (math.erf(x) - y) * (SQRT_PI / 2.0) * math.exp(x * x)
    else:
        target = 1.0 - y  # exact for y in [0.5, 1)
        if target < 1e-7:
            # beyond the polynomial's fitted range: bootstrap from the
            # erfc asymptotic erfc(x) ~ exp(-x^2) / (x sqrt(pi))
            big_w = -math.log(target)
            x = math.sqrt(big_w)
            for _ in range(2):
                x = math.sqrt(big_w - math.log(x * SQRT_PI))
        for _ in range(6):
            x -= (target - math.erfc(x)) * (SQRT_PI / 2.0) * math.exp(x * x)
    return x


# ---------------------------------------------------------------------------
# Parameter bundles


@dataclass(frozen=True)
class QualityParams:
    """Score-distribution and density parameters for the quality models."""

    p: float = 1.0
    sigma: float = 1.0
    mu: float = 0.0
    s: float = 0.5

    def __post_init__(self) -> None:
        if self.p < 0:
            raise ValueError(f"task exponent p must be >= 0, got {self.p}")
        if self.sigma <= 0:
            raise ValueError(f"score std sigma must be > 0, got {self.sigma}")
        if not 0 < self.s <= 1:
            raise ValueError(f"density s must be in (0, 1], got {self.s}")

    @property
    def p_sigma(self) -> float:
        return self.p * self.sigma


@dataclass(frozen=True)
class CostModelParams:
    """Sequence length, head dim, tile size, density, Performer features."""

    n: int = 1024
    d: int = 64
    T: int = 128
    s: float = 0.5
    m: int | None = None

    def __post_init__(self) -> None:
        if min(self.n, self.d) < 1 or self.T < 1:
            raise ValueError("n, d must be positive and T >= 1")
        if not 0 <= self.s <= 1:
            raise ValueError(f"density s must be in [0, 1], got {self.s}")
        if self.m is not None and self.m < 1:
            raise ValueError("Performer feature count m must be positive")

    @property
    def features(self) -> int:
        return self.m if self.m is not None else performer_feature_count(self.d)


def performer_feature_count(d: int) -> int:
    """Orthogonal-feature count m = d ln d used by the Performer model."""
    if d < 2:
        raise ValueError("d must be >= 2")
    return round(d * math.log(d))


# ---------------------------------------------------------------------------
# Lottery-ticket quality (closed forms)


def quality_topk(s: float, p_sigma: float) -> float:
    """Quality of exact top-k selection at density s."""
    if not 0 < s < 1:
        raise ValueError(f"top-k density must be in (0, 1), got {s}")
    if p_sigma < 0:
        raise ValueError(f"p*sigma must be >= 0, got {p_sigma}")
    return (1.0 + erf(p_sigma / math.sqrt(2.0) - erfinv(1.0 - 2.0 * s))) / 2.0


def quality_fixed(s: float) -> float:
    """Quality of a value-blind fixed pattern: exactly its density."""
    if not 0 < s <= 1:
        raise ValueError(f"density must be in (0, 1], got {s}")
    return s


@dataclass(frozen=True)
class NmQuality:
    value: float
    is_lower_bound: bool


def quality_nm(p_sigma: float, mode: SparsityMode = SparsityMode.ONE_OF_TWO) -> NmQuality:
    """Quality of dynamic N:M selection.

    Exact for 1:2; the same expression is only a lower bound for 2:4
    (keeping the top two of four beats two independent best-of-two picks).
    """
    if p_sigma < 0:
        raise ValueError(f"p*sigma must be >= 0, got {p_sigma}")
    value = (1.0 + erf(p_sigma / 2.0)) / 2.0
    return NmQuality(value, is_lower_bound=(mode is SparsityMode.TWO_OF_FOUR))


def empirical_quality(a: DenseMatrix, mask: PruneMask, p: float) -> float:
    """Measured per-row kept share of p-th-power mass under a mask."""
    if (a.rows, a.cols) != (mask.rows, mask.cols):
        raise ValueError(f"mask shape {(mask.rows, mask.cols)} != matrix {a.shape}")
    if p <= 0:
        raise ValueError(f"p must be > 0, got {p}")
    if (a.data < 0).any():
        raise ValueError("quality is defined for nonnegative weights")
    powered = a.data**p
    denom = powered.sum(axis=1)
    if (denom == 0).any():
        raise ValueError("zero row: quality undefined")
    num = (powered * mask.bits).sum(axis=1)
    return float((num / denom).mean())


# ---------------------------------------------------------------------------
# Monte-Carlo validators of the quality integrals


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    samples: int

    def within(self, reference: float, n_se: float = 3.0) -> bool:
        return abs(self.value - reference) <= n_se * self.std_error


def _mc_accumulate(statistic, samples: int, seed: int, width: int):
    """Chunked mean and standard error of ``statistic(z)`` over N(0,1) draws."""
    rng = np.random.default_rng(seed)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        chunk = min(_MC_CHUNK, samples - done)
        t = statistic(rng.standard_normal((chunk, width)))
        total += float(t.sum())
        total_sq += float((t * t).sum())
        done += chunk
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0)
    return mean, math.sqrt(var / samples)


def mc_quality_nm(
    p: float,
    sigma: float,
    mode: SparsityMode,
    samples: int,
    seed: int = 0,
) -> McEstimate:
    """Sampled N:M quality: E[kept p-power mass] / (M * E[X^p]).

    Seeded and chunk-deterministic. The 1:2 estimate converges to the
    closed form; the 2:4 estimate sits above it, confirming the bound
    direction.
    """
    if samples < _MC_MIN_SAMPLES:
        raise ValueError(f"need at least {_MC_MIN_SAMPLES} samples, got {samples}")
    if p < 0 or sigma <= 0:
        raise ValueError("require p >= 0 and sigma > 0")
    ps = p * sigma
    denom = math.exp(ps * ps / 2.0)

    if mode is SparsityMode.ONE_OF_TWO:
        def stat(z):
            xp = np.exp(ps * z)
            return xp.max(axis=1) / (2.0 * denom)

        width = 2
    else:
        def stat(z):
            xp = np.exp(ps * z)
            top2 = xp.sum(axis=1) - xp.min(axis=1) - np.partition(xp, 1, axis=1)[:, 1]
            return top2 / (4.0 * denom)

        width = 4
    mean, se = _mc_accumulate(stat, samples, seed, width)
    return McEstimate(mean, se, samples)


def mc_quality_topk(
    s: float,
    p_sigma: float,
    samples: int,
    seed: int = 0,
) -> McEstimate:
    """Sampled top-k quality: tail mass of X^p above the density threshold."""
    if samples < _MC_MIN_SAMPLES:
        raise ValueError(f"need at least {_MC_MIN_SAMPLES} samples, got {samples}")
    if not 0 < s < 1:
        raise ValueError(f"top-k density must be in (0, 1), got {s}")
    if p_sigma < 0:
        raise ValueError(f"p*sigma must be >= 0, got {p_sigma}")
    cut = math.sqrt(2.0) * erfinv(1.0 - 2.0 * s)
    denom = math.exp(p_sigma * p_sigma / 2.0)

    def stat(z):
        z0 = z[:, 0]
        return np.where(z0 > cut, np.exp(p_sigma * z0), 0.0) / denom

    mean, se = _mc_accumulate(stat, samples, seed, 1)
    return McEstimate(mean, se, samples)


# ---------------------------------------------------------------------------
# Memory traffic and speedup models


@dataclass(frozen=True)
class MemoryAccess:
    """Element accesses per attention stage under the tiling model."""

    qk: float
    softmax: float
    av: float

    @property
    def total(self) -> float:
        return self.qk + self.softmax + self.av


def memory_access_counts(
    kind: str, n: int, d: int, T: int, s: float = 1.0
) -> MemoryAccess:
    """Table of per-stage accesses for full or explicit top-k attention."""
    if min(n, d, T) < 1:
        raise ValueError("n, d, T must be positive")
    if not 0 <= s <= 1:
        raise ValueError(f"density must be in [0, 1], got {s}")
    qk = n * n * (2.0 * d / T + 1.0)
    if kind == "full":
        return MemoryAccess(qk, 2.0 * n * n, n * d * (2.0 * n / T + 1.0))
    if kind == "topk":
        return MemoryAccess(qk, 2.0 * n * n * s, n * d * (s * n + s * n / T + 1.0))
    raise ValueError(f"unknown access kind {kind!r} (expected 'full' or 'topk')")


def _full_traffic(n: float, d: float, T: float) -> float:
    return n * n * (2.0 * d / T + 1.0) + 2.0 * n * n + n * d * (2.0 * n / T + 1.0)


def _nm_traffic(n: float, d: float, T: float) -> float:
    qk = n * n * (2.0 * d / T + 0.5 + 1.0 / 16.0)
    sm = n * n
    av = n * d * (n / T + n / (2.0 * T) + n / (16.0 * T) + 1.0)
    return qk + sm + av


def _fixed_traffic(n: float, d: float, T: float, s: float) -> float:
    return (
        s * n * n * (2.0 * d / T + 1.0)
        + 2.0 * n * n * s
        + n * d * ((1.0 + s) * n / T + 1.0)
    )


@dataclass(frozen=True)
class SpeedupEstimate:
    """Model speedup in the n >> d limit and at the given finite n."""

    asymptotic: float
    finite: float


def speedup_topk_bound(params: CostModelParams) -> float:
    """Upper bound on top-k speedup at density s (n >> d form)."""
    d, T, s = params.d, params.T, params.s
    return (4.0 * d + 3.0 * T) / (2.0 * d + T + (d + 2.0 * T + d * T) * s)


def speedup_fixed(params: CostModelParams) -> SpeedupEstimate:
    """Fixed-pattern speedup at density s."""
    d, T, s, n = params.d, params.T, params.s, params.n
    if s <= 0:
        raise ValueError("fixed-pattern speedup needs density s > 0")
    asym = (4.0 * d + 3.0 * T) / ((1.0 + 3.0 * s) * d + 3.0 * s * T)
    return SpeedupEstimate(asym, _full_traffic(n, d, T) / _fixed_traffic(n, d, T, s))


def speedup_nm(params: CostModelParams) -> SpeedupEstimate:
    """Dynamic 1:2 / 2:4 speedup (compressed values + 1/16 metadata)."""
    d, T, n = params.d, params.T, params.n
    asym = (64 * d + 48 * T) / (57 * d + 25 * T)
    return SpeedupEstimate(asym, _full_traffic(n, d, T) / _nm_traffic(n, d, T))


def performer_traffic(n: int, d: int, T: int, m: int) -> float:
    """Total accesses of the numerically stable Performer computation graph."""
    t = 2.0 * (n * m * (2.0 * d / T + 1.0) + n * (d + 1.0) + n * (m + 1.0) + n * (m + 3.0))
    t += m * (n + 1.0)
    t += n * (m / T + m + 1.0)
    t += m * d * (2.0 * n / T + 1.0)
    t += n * d * (2.0 * m / T + 1.0)
    t += n
    return t


def performer_speedup(n: int, d: int, T: int, m: int) -> float:
    """Performer speedup over full attention at sequence length n."""
    if min(n, d, T, m) < 1:
        raise ValueError("n, d, T, m must be positive")
    return _full_traffic(n, d, T) / performer_traffic(n, d, T, m)


# ---------------------------------------------------------------------------
# Crossover solvers


def topk_unity_density(d: int, T: int) -> float:
    """Density where the top-k speedup bound equals 1."""
    return (2.0 * d + 2.0 * T) / (d + 2.0 * T + d * T)


def topk_equal_efficiency_density(d: int, T: int) -> float:
    """Density where the top-k bound matches the N:M speedup."""
    nm = (64 * d + 48 * T) / (57 * d + 25 * T)
    return ((4.0 * d + 3.0 * T) / nm - (2.0 * d + T)) / (d + 2.0 * T + d * T)


def nm_fixed_crossover_density(d: int, T: int) -> float:
    """Density where the fixed-pattern speedup matches the N:M speedup.

    Solved by bisection: the fixed speedup is strictly decreasing in s.
    """
    nm = (64 * d + 48 * T) / (57 * d + 25 * T)

    def fixed_minus_nm(s: float) -> float:
        return (4.0 * d + 3.0 * T) / ((1.0 + 3.0 * s) * d + 3.0 * s * T) - nm

    lo, hi = 1e-9, 1.0
    if fixed_minus_nm(hi) > 0:
        raise ValueError("no crossover: fixed pattern faster even when dense")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if fixed_minus_nm(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _first_n_where(predicate, lo: int, hi: int) -> int:
    while lo < hi:
        mid = (lo + hi) // 2
        if predicate(mid):
            hi = mid
        else:
            lo = mid + 1
    return lo


def performer_unity_crossover(d: int, T: int, m: int, max_n: int = 1 << 22) -> int:
    """Smallest n where the Performer model beats dense attention."""
    pred = lambda n: performer_speedup(n, d, T, m) > 1.0
    if not pred(max_n):
        raise ValueError("Performer model never crosses 1 in range")
    return _first_n_where(pred, 1, max_n)


def performer_nm_crossover(d: int, T: int, m: int, max_n: int = 1 << 22) -> int:
    """Smallest n where the Performer model matches the N:M speedup."""
    pred = lambda n: performer_speedup(n, d, T, m) >= speedup_nm(
        CostModelParams(n=n, d=d, T=T)
    ).finite
    if not pred(max_n):
        raise ValueError("Performer model never reaches the N:M speedup in range")
    return _first_n_where(pred, 1, max_n)


# ---------------------------------------------------------------------------
# Softmax-kernel MSE comparison


def mse_sm12(sm: float, q_norm: float, d: int) -> float:
    """MSE of the best-of-two-keys softmax estimate at kernel value sm."""
    if sm <= 0:
        raise ValueError(f"softmax kernel value must be > 0, got {sm}")
    if q_norm <= 0 or d < 1:
        raise ValueError("require q_norm > 0 and d >= 1")
    damp = (1.0 - erf(math.sqrt(d) / (q_norm * math.sqrt(2.0)) * math.log(sm))) / 2.0
    return sm * sm * damp


def mse_performer_bound(sm: float, q_norm: float, k_norm: float, m: int, d: int) -> float:
    """Upper bound on the MSE of the positive orthogonal-feature estimator."""
    if sm <= 0 or q_norm <= 0 or k_norm <= 0 or m < 1 or d < 1:
        raise ValueError("require sm, q_norm, k_norm > 0 and m, d >= 1")
    grow = math.exp((q_norm * q_norm + k_norm * k_norm) / math.sqrt(d)) * sm * sm
    return sm * sm / m * (grow - 1.0 - (1.0 - 1.0 / m) * 2.0 / (d + 2.0))
