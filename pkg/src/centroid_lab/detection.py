"""Finite-size detector arrays and centroid histograms.

Detector i of an array with size d0 and shift s covers
[s + (i - 1/2) d0, s + (i + 1/2) d0) and reports s + i d0. Centroid outcomes
of an N-photon event are then s + (d0/N) sum(i_n).

Histograms built from shift plans live on a common grid of spacing
d0_min / N centred on 0. An array of size m*d0_min shifted by j*d0_min has
its centroid lattice exactly on that grid, at indices N*j + m*sum(i_n), so
all bookkeeping below is integer arithmetic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .sampler import EventBatch
from .states import NoonState

__all__ = [
    "DetectorArray",
    "ShiftPlan",
    "CentroidHistogram",
    "DetectionError",
    "default_rho",
    "detector_indices",
    "discretize",
    "discrete_centroid",
    "centroid_histogram",
    "run_plan",
    "run_plan_bruteforce",
    "multiphoton_fraction",
    "expected_multiphoton_fraction",
]

METHODS = ("I", "II")


class DetectionError(ValueError):
    pass


def default_rho(n_photons: int) -> float:
    """Evaluation extent: 7 lambda for two photons, scaled by 2/N above."""
    return 7.0 * 2.0 / n_photons


@dataclass(frozen=True)
class DetectorArray:
    d0: float
    shift: float = 0.0
    rho: float = 7.0

    def __post_init__(self):
        if not self.d0 > 0:
            raise DetectionError(f"detector size must be positive, got {self.d0}")
        if not self.rho > 0:
            raise DetectionError(f"rho must be positive, got {self.rho}")

    @property
    def n_bins(self) -> int:
        """Number of detection bins p, the integer closest to rho/d0 (at least 1)."""
        return max(1, int(round(self.rho / self.d0)))

    def outcome(self, index):
        return self.shift + np.asarray(index) * self.d0


@dataclass(frozen=True)
class ShiftPlan:
    """m shifts j*d0_min (j = 0..m-1) of an array of size m*d0_min."""

    base_size: float
    multiplier: int
    method: str = "I"

    def __post_init__(self):
        if not self.base_size > 0:
            raise DetectionError("base_size must be positive")
        if int(self.multiplier) != self.multiplier or self.multiplier < 1:
            raise DetectionError(f"multiplier must be a positive integer, got {self.multiplier}")
        if self.method not in METHODS:
            raise DetectionError(f"method must be 'I' or 'II', got {self.method!r}")

    @property
    def detector_size(self) -> float:
        return self.multiplier * self.base_size

    @property
    def shifts(self) -> np.ndarray:
        return np.arange(self.multiplier) * self.base_size


@dataclass
class CentroidHistogram:
    """Counts on a uniform centroid grid, centres ``origin + k * bin_width``.

    ``reachable`` marks the bins a measurement could populate at all; only
    those are compared against the reference profile.
    """

    bin_width: float
    k_min: int
    counts: np.ndarray
    reachable: np.ndarray
    origin: float = 0.0
    excluded: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def bin_centers(self) -> np.ndarray:
        return self.origin + (self.k_min + np.arange(self.counts.size)) * self.bin_width

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def occupied(self) -> np.ndarray:
        return self.bin_centers[self.counts > 0]


def detector_indices(positions, array: DetectorArray) -> np.ndarray:
    """Integer detector index i = floor((x - s)/d0 + 1/2) of every photon."""
    return np.floor((np.asarray(positions, dtype=float) - array.shift) / array.d0 + 0.5).astype(np.int64)


def discretize(batch: EventBatch, array: DetectorArray) -> EventBatch:
    """Replace every photon position by the centre of the detector that registers it."""
    idx = detector_indices(batch.positions, array)
    return EventBatch(array.outcome(idx), seed=batch.seed, state_descriptor=batch.state_descriptor)


def discrete_centroid(event_row, array: DetectorArray, *, atol: float = 1e-9) -> float:
    """Centroid s + (d0/N) sum(i_n) of one discretised event."""
    row = np.asarray(event_row, dtype=float)
    idx_real = (row - array.shift) / array.d0
    idx = np.rint(idx_real)
    if np.any(np.abs(idx_real - idx) > atol):
        raise DetectionError("event positions are not on the detector outcome lattice")
    return float(array.shift + array.d0 / row.size * idx.sum())


def _window_k(half_width: float, bin_width: float) -> int:
    return int(math.floor(half_width / bin_width + 1e-9))


def centroid_histogram(batch: EventBatch, array: DetectorArray) -> CentroidHistogram:
    """Centroid histogram of a single fixed array on its own lattice s + k d0/N.

    Events whose centroid falls outside [-rho/2, rho/2] are counted as excluded.
    """
    n = batch.n_photons
    width = array.d0 / n
    sums = detector_indices(batch.positions, array).sum(axis=1)
    # lattice points s + k*width inside the window
    lo = math.ceil((-array.rho / 2 - array.shift) / width - 1e-9)
    hi = math.floor((array.rho / 2 - array.shift) / width + 1e-9)
    inside = (sums >= lo) & (sums <= hi)
    counts = np.bincount(sums[inside] - lo, minlength=hi - lo + 1)
    return CentroidHistogram(
        bin_width=width,
        k_min=lo,
        counts=counts,
        reachable=np.ones(counts.size, dtype=bool),
        origin=array.shift,
        excluded=int((~inside).sum()),
        meta={"d0": array.d0, "shift": array.shift, "rho": array.rho, "method": "single", "shifts": 1},
    )


def _plan_grid(n: int, plan: ShiftPlan, rho: float):
    width = plan.base_size / n
    kmax = _window_k(rho / 2, width)
    m = plan.multiplier
    residues = np.unique((n * np.arange(m)) % m)
    ks = np.arange(-kmax, kmax + 1)
    reachable = np.isin(ks % m, residues)
    return width, kmax, reachable


def _chunks(batch: EventBatch, plan: ShiftPlan):
    m = plan.multiplier
    if plan.method == "I":
        return [batch.positions] * m
    size = batch.n_events // m
    if size == 0:
        raise DetectionError(f"method II with {m} shifts needs at least {m} events, got {batch.n_events}")
    return [batch.positions[j * size : (j + 1) * size] for j in range(m)]


def run_plan_bruteforce(batch: EventBatch, plan: ShiftPlan, rho: float) -> CentroidHistogram:
    """Reference implementation: discretise separately for every shift."""
    n = batch.n_photons
    m = plan.multiplier
    width, kmax, reachable = _plan_grid(n, plan, rho)
    counts = np.zeros(2 * kmax + 1, dtype=np.int64)
    excluded = 0
    for j, pos in enumerate(_chunks(batch, plan)):
        u = pos / plan.base_size
        idx = np.floor((u - j) / m + 0.5).astype(np.int64)
        k = n * j + m * idx.sum(axis=1)
        inside = np.abs(k) <= kmax
        excluded += int((~inside).sum())
        counts += np.bincount(k[inside] + kmax, minlength=counts.size)
    return _plan_histogram(plan, rho, width, kmax, counts, reachable, excluded)


def _plan_histogram(plan, rho, width, kmax, counts, reachable, excluded):
    return CentroidHistogram(
        bin_width=width,
        k_min=-kmax,
        counts=counts,
        reachable=reachable,
        excluded=excluded,
        meta={
            "d0": plan.detector_size,
            "d0_min": plan.base_size,
            "method": plan.method,
            "shifts": plan.multiplier,
            "rho": rho,
        },
    )


def _pooled_all_shifts(pos: np.ndarray, plan: ShiftPlan, kmax: int):
    """Histogram of N*j + m*sum(i_n) pooled over j = 0..m-1 for the same events.

    With b_n the photon's fine-lattice index (floor(u) for even m, floor(u+1/2)
    for odd m) and b_n + floor(m/2) = m*Q_n + R_n, the detector index under
    shift j is Q_n - [R_n < j]. Each event therefore contributes N+1 runs of
    bins with stride N, which are accumulated with stride-N difference arrays.
    """
    n = pos.shape[1]
    m = plan.multiplier
    u = pos / plan.base_size
    b = np.floor(u) if m % 2 == 0 else np.floor(u + 0.5)
    b = b.astype(np.int64) + m // 2
    q, r = np.divmod(b, m)
    q_sum = q.sum(axis=1)
    r_sorted = np.sort(r, axis=1)
    lows = np.concatenate([np.zeros((len(pos), 1), np.int64), r_sorted + 1], axis=1)
    highs = np.concatenate([r_sorted, np.full((len(pos), 1), m - 1, np.int64)], axis=1)

    size = 2 * kmax + 1
    diff = np.zeros(size + n, dtype=np.int64)
    total_inside = 0
    for t in range(n + 1):
        base = m * (q_sum - t)  # k = base + n*j
        j0 = lows[:, t]
        j1 = highs[:, t]
        # restrict the run to bins inside the window
        j0 = np.maximum(j0, _ceil_div(-kmax - base, n))
        j1 = np.minimum(j1, (kmax - base) // n)
        ok = j1 >= j0
        start = base[ok] + n * j0[ok] + kmax
        stop = base[ok] + n * (j1[ok] + 1) + kmax
        diff += np.bincount(start, minlength=diff.size)[: diff.size]
        diff -= np.bincount(stop, minlength=diff.size)[: diff.size]
        total_inside += int((j1[ok] - j0[ok] + 1).sum())
    counts = np.empty(size + n, dtype=np.int64)
    for res in range(n):
        counts[res::n] = np.cumsum(diff[res::n])
    counts = counts[:size]
    excluded = len(pos) * m - total_inside
    return counts, excluded


def _ceil_div(a, b):
    return -((-a) // b)


def run_plan(batch: EventBatch, plan: ShiftPlan, rho: float | None = None) -> CentroidHistogram:
    """Pool centroid counts over all shifts of ``plan`` on the common grid."""
    if batch.n_events == 0:
        raise DetectionError("empty batch")
    n = batch.n_photons
    rho = default_rho(n) if rho is None else rho
    m = plan.multiplier
    if plan.method == "II" or m == 1:
        return run_plan_bruteforce(batch, plan, rho)
    width, kmax, reachable = _plan_grid(n, plan, rho)
    counts, excluded = _pooled_all_shifts(batch.positions, plan, kmax)
    return _plan_histogram(plan, rho, width, kmax, counts, reachable, excluded)


def multiphoton_fraction(batch: EventBatch, array: DetectorArray) -> float:
    """Fraction of events whose photons all land in the same detector."""
    idx = detector_indices(batch.positions, array)
    same = np.all(idx == idx[:, :1], axis=1)
    return float(same.mean())


def expected_multiphoton_fraction(
    state: NoonState, array: DetectorArray, *, extent: float = 40.0, step: float = 0.05
) -> float:
    """Probability that all photons of a NOON event land in one detector.

    The density factorises per photon once cos^2 is written as
    (1 + Re exp(4 pi i sum x)) / 2, so the same-bin probability of detector i
    is pref/2 * (g_i^N + Re h_i^N) with g_i, h_i one-dimensional integrals of
    exp(-a x^2) and exp(-a x^2 + 4 pi i x) over the detector. Integrals use
    Gauss-Legendre on sub-intervals no wider than ``step`` within
    [-extent, extent], outside of which the envelope is negligible.
    """
    n = state.n_photons
    a = state.envelope_rate
    pref = 2.0 * (state.delta_k / math.sqrt(math.pi)) ** n
    i_lo = math.floor((-extent - array.shift) / array.d0)
    i_hi = math.ceil((extent - array.shift) / array.d0)
    idx = np.arange(i_lo, i_hi + 1)
    lo = np.clip(array.shift + (idx - 0.5) * array.d0, -extent, extent)
    hi = np.clip(array.shift + (idx + 0.5) * array.d0, -extent, extent)
    keep = hi > lo
    lo, hi = lo[keep], hi[keep]

    nodes, weights = np.polynomial.legendre.leggauss(24)
    pieces = np.maximum(np.ceil((hi - lo) / step).astype(int), 1)
    owner = np.repeat(np.arange(lo.size), pieces)
    offset = np.arange(owner.size) - np.repeat(np.cumsum(pieces) - pieces, pieces)
    width = ((hi - lo) / pieces)[owner]
    left = lo[owner] + offset * width
    x = left[:, None] + 0.5 * width[:, None] * (nodes + 1.0)
    w = 0.5 * width[:, None] * weights
    env = np.exp(-a * x * x) * w
    g = np.bincount(owner, weights=env.sum(axis=1), minlength=lo.size)
    h_re = np.bincount(owner, weights=(env * np.cos(4 * np.pi * x)).sum(axis=1), minlength=lo.size)
    h_im = np.bincount(owner, weights=(env * np.sin(4 * np.pi * x)).sum(axis=1), minlength=lo.size)
    h = h_re + 1j * h_im
    total = 0.5 * pref * np.sum(g**n + (h**n).real)
    return float(min(max(total, 0.0), 1.0))
