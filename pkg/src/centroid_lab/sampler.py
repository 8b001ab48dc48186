"""Correlated N-photon event generation.

Events are drawn in rotated coordinates y = M x in which the density
factorises: every row of M except the symmetric one sees a plain Gaussian,
and the symmetric (centroid) row is sampled by inverting a tabulated CDF.
The back transform x = M^T y produces the correlated photon positions.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import PchipInterpolator
from scipy.special import ndtri

from .states import CatState, JointGaussianState, NoonState, StateError, StateModel
from .states import centroid_direction_log_density, state_to_dict

__all__ = [
    "TransformMatrix",
    "transform_matrix",
    "TabulatedInverseCdf",
    "build_inverse_cdf",
    "EventBatch",
    "sample_events",
    "split_batch",
    "BLOCK_SIZE",
    "GRID_POINTS",
    "TAIL_EPSILON",
]

GRID_POINTS = 2**16
TAIL_EPSILON = 1e-10
# events per RNG substream; fixed so results do not depend on worker count
BLOCK_SIZE = 2**16

_S2 = math.sqrt(2.0)
_S3 = math.sqrt(3.0)


@dataclass(frozen=True)
class TransformMatrix:
    n: int
    entries: np.ndarray
    centroid_row_index: int = 0

    def forward(self, xs: np.ndarray) -> np.ndarray:
        return xs @ self.entries.T

    def inverse(self, ys: np.ndarray) -> np.ndarray:
        return ys @ self.entries


def _printed_rows(n):
    if n == 2:
        # symmetric row moved first
        return np.array([[1.0, 1.0], [1.0, -1.0]]) / _S2
    if n == 3:
        return np.array(
            [
                [1.0, 1.0, 1.0],
                [0.0, math.sqrt(1.5), -math.sqrt(1.5)],
                [_S2, -1.0 / _S2, -1.0 / _S2],
            ]
        ) / _S3
    if n == 4:
        r23 = math.sqrt(2.0 / 3.0)
        return np.array(
            [
                [1.0, 1.0, 1.0, 1.0],
                [0.0, 0.0, _S2, -_S2],
                [0.0, 2.0 * r23, -r23, -r23],
                # leading entry sqrt(3); the printed sqrt(6) breaks orthogonality
                [_S3, -1.0 / _S3, -1.0 / _S3, -1.0 / _S3],
            ]
        ) / 2.0
    raise StateError(f"no transform matrix registered for n = {n}")


def transform_matrix(n: int) -> TransformMatrix:
    """Orthogonal transform whose first row is (1, ..., 1)/sqrt(n)."""
    m = _printed_rows(n)
    m.setflags(write=False)
    return TransformMatrix(n=n, entries=m, centroid_row_index=0)


@dataclass(frozen=True)
class TabulatedInverseCdf:
    """Quantile function of a 1D density tabulated on [-L, L]."""

    grid: np.ndarray
    cdf_values: np.ndarray
    interpolation: str
    _inverse: PchipInterpolator = field(repr=False, compare=False)

    def cdf(self, v) -> np.ndarray:
        return np.interp(v, self.grid, self.cdf_values, left=0.0, right=1.0)

    def __call__(self, u) -> np.ndarray:
        return self._inverse(np.clip(u, 0.0, 1.0))


def build_inverse_cdf(
    density_1d: Callable[[np.ndarray], np.ndarray],
    half_width_L: float,
    grid_points: int = GRID_POINTS,
    *,
    log_density: bool = False,
) -> TabulatedInverseCdf:
    """Tabulate the CDF of ``density_1d`` and return its monotone inverse.

    The cumulative integral uses composite Simpson on a uniform grid; the
    inverse is a PCHIP interpolant through the (cdf, grid) nodes, so every
    retained node inverts exactly. With ``log_density=True`` the callable
    returns log densities, which keeps peaked or very wide profiles finite.
    """
    grid = np.linspace(-half_width_L, half_width_L, grid_points)
    values = np.asarray(density_1d(grid), dtype=float)
    if log_density:
        if np.any(np.isnan(values)) or np.any(values == np.inf):
            raise StateError("log density has non-finite values")
        top = values.max()
        if not np.isfinite(top):
            raise StateError("density is numerically zero everywhere")
        values = np.exp(values - top)
    if not np.all(np.isfinite(values)):
        raise StateError("density has non-finite values")
    if np.any(values < 0):
        raise StateError("density must be non-negative")
    if values.max() <= 0:
        raise StateError("density is numerically zero everywhere")

    cum = cumulative_simpson(values, x=grid, initial=0.0)
    total = cum[-1]
    cdf = np.maximum.accumulate(cum / total)
    # the table only covers [-L, L]; a visible edge density means L is too small
    edge = max(values[0], values[-1]) / values.max()
    if edge > TAIL_EPSILON:
        raise StateError(f"relative density {edge:.3g} at +-L; increase half_width_L")
    cdf[-1] = 1.0
    # keep first occurrence of each cdf value; flat stretches have no inverse
    keep = np.concatenate(([True], np.diff(cdf) > 0))
    inverse = PchipInterpolator(cdf[keep], grid[keep], extrapolate=False)
    return TabulatedInverseCdf(grid=grid, cdf_values=cdf, interpolation="pchip", _inverse=inverse)


@dataclass(frozen=True)
class EventBatch:
    """N0 x N photon positions (units of lambda) plus provenance."""

    positions: np.ndarray
    seed: int | None = None
    state_descriptor: dict | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] < 1:
            raise ValueError(f"positions must be a 2D array of shape (N0, N), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        object.__setattr__(self, "positions", pos)

    @property
    def n_events(self) -> int:
        return self.positions.shape[0]

    @property
    def n_photons(self) -> int:
        return self.positions.shape[1]

    @property
    def centroids(self) -> np.ndarray:
        return self.positions.mean(axis=1)


def _centroid_half_width(state: StateModel) -> float:
    """Half width L of the tabulation domain for the centroid coordinate."""
    # Gaussian tail mass beyond 7 standard deviations is ~3e-12
    if isinstance(state, NoonState):
        std = 1.0 / math.sqrt(2.0 * state.envelope_rate)
        return 7.0 * std
    if isinstance(state, CatState):
        std = 1.0 / (2.0 * math.sqrt(2.0) * math.pi)
        # |cosh|^2 shifts the lobes out to |alpha| cos(phi) / pi
        shift = state.alpha_mag * abs(math.cos(state.alpha_phase)) / math.pi
        return shift + 7.0 * std
    raise StateError(f"no tabulated centroid coordinate for {type(state).__name__}")


_inverse_cache: dict = {}


def centroid_inverse_cdf(state: StateModel) -> TabulatedInverseCdf:
    key = state
    table = _inverse_cache.get(key)
    if table is None:
        table = build_inverse_cdf(
            lambda y: centroid_direction_log_density(state, y),
            _centroid_half_width(state),
            GRID_POINTS,
            log_density=True,
        )
        if len(_inverse_cache) > 64:
            _inverse_cache.clear()
        _inverse_cache[key] = table
    return table


def _relative_std(state: StateModel) -> float:
    if isinstance(state, NoonState):
        return 1.0 / math.sqrt(2.0 * state.envelope_rate)
    if isinstance(state, JointGaussianState):
        return 1.0 / (2.0 * state.beta_width)
    if isinstance(state, CatState):
        return 1.0 / (2.0 * math.sqrt(2.0) * math.pi)
    raise StateError(f"not a state: {state!r}")


def _block_rng(seed: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(block,))
    return np.random.Generator(np.random.Philox(ss))


def _sample_block(state, matrix, table, seed, block, count):
    rng = _block_rng(seed, block)
    n = matrix.n
    # one row of n uniforms per event, filled row-major, so event k of a block
    # never depends on how many events follow it; the half-ulp offset keeps
    # every draw strictly inside (0, 1)
    u = rng.random((count, n)) + 2.0**-54
    ys = np.empty((count, n))
    if isinstance(state, JointGaussianState):
        ys[:, 0] = ndtri(u[:, 0]) / (2.0 * math.sqrt(state.centroid_eigenvalue))
    else:
        ys[:, 0] = table(u[:, 0])
    ys[:, 1:] = ndtri(u[:, 1:]) * _relative_std(state)
    return matrix.inverse(ys)


def sample_events(state: StateModel, n_events: int, seed: int, *, threads: int = 1) -> EventBatch:
    """Draw ``n_events`` correlated photon events from ``state``.

    Events are generated in fixed blocks of ``BLOCK_SIZE``; block k uses its
    own Philox substream derived from (seed, k), so the result is identical
    for any ``threads``.
    """
    if n_events < 1:
        raise ValueError("n_events must be at least 1")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    n = state.n_photons
    matrix = transform_matrix(n)
    table = None if isinstance(state, JointGaussianState) else centroid_inverse_cdf(state)

    starts = range(0, n_events, BLOCK_SIZE)
    jobs = [(k, min(BLOCK_SIZE, n_events - s)) for k, s in enumerate(starts)]

    def run(job):
        return _sample_block(state, matrix, table, seed, *job)

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(job) for job in jobs]
    return EventBatch(np.vstack(parts), seed=seed, state_descriptor=state_to_dict(state))


def split_batch(batch: EventBatch, parts: int) -> tuple[list[EventBatch], int]:
    """Split into ``parts`` contiguous disjoint batches of floor(N0/parts) rows.

    Returns the batches and the number of trailing rows dropped.
    """
    if parts < 1:
        raise ValueError("parts must be at least 1")
    if parts > batch.n_events:
        raise ValueError(f"cannot split {batch.n_events} events into {parts} parts")
    size = batch.n_events // parts
    chunks = [
        EventBatch(
            batch.positions[i * size : (i + 1) * size],
            seed=batch.seed,
            state_descriptor=batch.state_descriptor,
        )
        for i in range(parts)
    ]
    return chunks, batch.n_events - size * parts
