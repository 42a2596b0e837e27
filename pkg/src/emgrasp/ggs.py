"""Greedy Gaussian segmentation of multichannel envelope trials.

Each candidate segment is modeled as an independent multivariate Gaussian;
a segment's cost is (m/2) * log det(S + lam*I) with S the mean-removed
empirical covariance (additive constants that do not depend on breakpoint
placement are dropped, so lower is better). Breakpoints are inserted one
at a time at the globally best split, then refined by cyclic single-
breakpoint relocation until a full pass moves nothing.

Trials are segmented at a downsampled rate (block averaging) for speed;
returned breakpoints are mapped back to native sample indices. Split scans
use cumulative first/second-moment accumulators so scoring all split
positions of a segment is one vectorized log-det batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, SingularityError
from .signal_pipeline import EnvelopeTrial

PHASE_NAMES = ("reach", "grasp", "return", "rest")


@dataclass
class GgsConfig:
    """Segmentation parameters.

    lam regularizes segment covariances; it must be positive whenever any
    admissible segment can be shorter than the channel count, otherwise
    covariances are singular by construction.
    """

    n_breakpoints: int = 3
    lam: float = 0.1
    downsample_factor: int = 16
    min_segment_len: int = 10
    max_adjust_passes: int = 10
    search_stride: int = 1

    def __post_init__(self):
        if self.n_breakpoints < 1:
            raise ConfigError(f"n_breakpoints must be >= 1, got {self.n_breakpoints}")
        if self.lam < 0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")
        if int(self.downsample_factor) != self.downsample_factor or self.downsample_factor < 1:
            raise ConfigError(f"downsample_factor must be a positive integer, got {self.downsample_factor}")
        self.downsample_factor = int(self.downsample_factor)
        if self.min_segment_len < 2:
            raise ConfigError(f"min_segment_len must be >= 2, got {self.min_segment_len}")
        if self.max_adjust_passes < 0:
            raise ConfigError("max_adjust_passes must be >= 0")
        if self.search_stride < 1:
            raise ConfigError("search_stride must be >= 1")


@dataclass
class Segmentation:
    """Ordered breakpoints (native sample indices) and the achieved cost."""

    breakpoints: tuple
    objective: float
    n_samples: int
    sample_rate: float
    downsample_factor: int
    cost_trace: list = field(default_factory=list)

    def __post_init__(self):
        bps = tuple(int(b) for b in self.breakpoints)
        if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
            raise DataError(f"breakpoints must be strictly increasing, got {bps}")
        if bps and (bps[0] <= 0 or bps[-1] >= self.n_samples):
            raise DataError(f"breakpoints must lie strictly inside (0, {self.n_samples}), got {bps}")
        self.breakpoints = bps

    @property
    def breakpoints_ms(self) -> tuple:
        return tuple(b * 1000.0 / self.sample_rate for b in self.breakpoints)

    def spans(self) -> dict:
        """Phase name -> [start, end) native sample span (3-breakpoint case)."""
        if len(self.breakpoints) != 3:
            raise DataError("phase spans are defined for exactly 3 breakpoints")
        bounds = (0, *self.breakpoints, self.n_samples)
        return {name: (bounds[i], bounds[i + 1]) for i, name in enumerate(PHASE_NAMES)}

    def phase_of_sample(self, index: int) -> str:
        for name, (a, b) in self.spans().items():
            if a <= index < b:
                return name
        raise DataError(f"sample index {index} outside [0, {self.n_samples})")


def segment_cost(data: np.ndarray, lam: float) -> float:
    """Gaussian negative-log-likelihood cost of one channels x m slice.

    cost = (m/2) * log det(S + lam*I), S = mean-removed covariance (1/m).

    Raises:
        SingularityError: lam == 0 with m <= channels, or numerically
            singular covariance; set lam > 0.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"segment_cost: expected channels x m slice, got ndim={x.ndim}")
    if not np.all(np.isfinite(x)):
        raise DataError("segment_cost: non-finite values in slice")
    c, m = x.shape
    if m < 2:
        raise DataError(f"segment_cost: segment length {m} < 2")
    if lam < 0:
        raise ConfigError(f"lam must be >= 0, got {lam}")
    if lam == 0 and m <= c:
        raise SingularityError(
            f"covariance of a length-{m} segment with {c} channels is singular; set lambda > 0"
        )
    xm = x - x.mean(axis=1, keepdims=True)
    cov = (xm @ xm.T) / m
    sign, logdet = np.linalg.slogdet(cov + lam * np.eye(c))
    if sign <= 0:
        raise SingularityError("segment covariance is numerically singular; set lambda > 0")
    return 0.5 * m * logdet


def downsample(samples: np.ndarray, factor: int) -> np.ndarray:
    """Block-average a channels x N matrix; a trailing partial block is dropped."""
    samples = np.asarray(samples, dtype=np.float64)
    if factor == 1:
        return samples.copy()
    nd = samples.shape[1] // factor
    return samples[:, : nd * factor].reshape(samples.shape[0], nd, factor).mean(axis=2)


class _CostModel:
    """Cumulative-moment accumulators for O(1) segment statistics.

    Holds sum(x) and sum(x x^T) prefixes over a time-major (n, c) series so
    the covariance of any [a, b) segment is assembled without touching the
    samples again; log-dets for a whole scan run as one stacked call.
    """

    def __init__(self, data_tc: np.ndarray, lam: float):
        self.n, self.c = data_tc.shape
        self.lam = lam
        self.cum1 = np.zeros((self.n + 1, self.c))
        np.cumsum(data_tc, axis=0, out=self.cum1[1:])
        outer = data_tc[:, :, None] * data_tc[:, None, :]
        self.cum2 = np.zeros((self.n + 1, self.c, self.c))
        np.cumsum(outer, axis=0, out=self.cum2[1:])
        self._eye = np.eye(self.c)

    def costs(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Vectorized segment costs for paired start/end index arrays."""
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        m = (b - a).astype(np.float64)
        if np.any(m < 2):
            raise DataError("segment length < 2 in cost scan")
        if self.lam == 0 and np.any(m <= self.c):
            raise SingularityError(
                f"segment length <= {self.c} channels with lambda == 0; set lambda > 0"
            )
        s1 = self.cum1[b] - self.cum1[a]
        s2 = self.cum2[b] - self.cum2[a]
        mu = s1 / m[:, None]
        cov = s2 / m[:, None, None] - mu[:, :, None] * mu[:, None, :]
        sign, logdet = np.linalg.slogdet(cov + self.lam * self._eye)
        if np.any(sign <= 0):
            raise SingularityError("segment covariance is numerically singular; set lambda > 0")
        return 0.5 * m * logdet

    def cost(self, a: int, b: int) -> float:
        return float(self.costs(np.asarray([a]), np.asarray([b]))[0])

    def split_costs(self, a: int, b: int, ts: np.ndarray) -> np.ndarray:
        """cost(a, t) + cost(t, b) for every candidate split t."""
        left = self.costs(np.full(ts.shape, a), ts)
        right = self.costs(ts, np.full(ts.shape, b))
        return left + right

    def total(self, bkps: list) -> float:
        bounds = np.asarray([0, *bkps, self.n], dtype=np.int64)
        return float(np.sum(self.costs(bounds[:-1], bounds[1:])))


def _admissible_splits(a: int, b: int, min_len: int, stride: int) -> np.ndarray:
    return np.arange(a + min_len, b - min_len + 1, stride, dtype=np.int64)


def ggs_segment(trial: EnvelopeTrial, config: GgsConfig) -> Segmentation:
    """Segment a trial into n_breakpoints + 1 phases.

    Greedy insertion: each round scans every admissible split of every
    current segment and inserts the split with the largest total-cost
    decrease (ties toward the smallest index). Adjustment: breakpoints are
    revisited in index order and moved to the cost-minimizing admissible
    position strictly between their neighbors; a move is accepted only if
    it strictly lowers the total, so passes terminate. cost_trace records
    the exact total after the initial state and after every accepted step.

    Raises:
        DataError: trial too short for the requested segment count, or no
            admissible split remains while breakpoints are still owed.
    """
    k = config.n_breakpoints
    min_len = config.min_segment_len
    stride = config.search_stride
    factor = config.downsample_factor

    d = downsample(trial.samples, factor)
    nd = d.shape[1]
    if nd < (k + 1) * min_len:
        raise DataError(
            f"trial too short to segment: {nd} downsampled samples < "
            f"{(k + 1) * min_len} required for {k} breakpoints at min_segment_len={min_len}"
        )
    model = _CostModel(d.T, config.lam)

    bkps: list = []
    trace = [model.total(bkps)]
    for _ in range(k):
        bounds = [0, *bkps, nd]
        base = trace[-1]
        best_total = None
        best_t = None
        for a, b in zip(bounds[:-1], bounds[1:]):
            ts = _admissible_splits(a, b, min_len, stride)
            if ts.size == 0:
                continue
            totals = base - model.cost(a, b) + model.split_costs(a, b, ts)
            j = int(np.argmin(totals))  # first minimum, i.e. smallest index
            if best_total is None or totals[j] < best_total:
                best_total = float(totals[j])
                best_t = int(ts[j])
        if best_t is None:
            raise DataError(
                f"no admissible split remains after {len(bkps)} of {k} breakpoints; "
                "trial structure too short for min_segment_len"
            )
        bkps = sorted(bkps + [best_t])
        trace.append(model.total(bkps))

    for _ in range(config.max_adjust_passes):
        moved = False
        for i in range(len(bkps)):
            lo = bkps[i - 1] if i > 0 else 0
            hi = bkps[i + 1] if i + 1 < len(bkps) else nd
            ts = _admissible_splits(lo, hi, min_len, stride)
            if ts.size == 0:
                continue
            pair_costs = model.split_costs(lo, hi, ts)
            j = int(np.argmin(pair_costs))
            current_pair = model.cost(lo, bkps[i]) + model.cost(bkps[i], hi)
            if pair_costs[j] < current_pair and int(ts[j]) != bkps[i]:
                bkps[i] = int(ts[j])
                trace.append(model.total(bkps))
                moved = True
        if not moved:
            break

    return Segmentation(
        breakpoints=tuple(b * factor for b in bkps),
        objective=trace[-1],
        n_samples=trial.n_samples,
        sample_rate=trial.sample_rate,
        downsample_factor=factor,
        cost_trace=trace,
    )


def objective(trial: EnvelopeTrial, breakpoints, config: GgsConfig) -> float:
    """Summed segment cost of a breakpoint placement, on downsampled data.

    Native-rate breakpoints are mapped to the downsampled grid by rounding.
    Mirrors the cost ggs_segment optimizes but goes through the direct
    dense segment_cost path, so the two implementations cross-check.
    """
    bps = [int(b) for b in breakpoints]
    if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
        raise DataError(f"objective: breakpoints must be strictly increasing, got {bps}")
    factor = config.downsample_factor
    d = downsample(trial.samples, factor)
    nd = d.shape[1]
    bd = [int(round(b / factor)) for b in bps]
    if any(b2 <= b1 for b1, b2 in zip(bd, bd[1:])) or (bd and (bd[0] <= 0 or bd[-1] >= nd)):
        raise DataError(
            f"objective: downsampled breakpoints {bd} invalid for series of length {nd}"
        )
    bounds = [0, *bd, nd]
    if any(b - a < 2 for a, b in zip(bounds[:-1], bounds[1:])):
        raise DataError("objective: a span is shorter than 2 downsampled samples")
    return sum(segment_cost(d[:, a:b], config.lam) for a, b in zip(bounds[:-1], bounds[1:]))
