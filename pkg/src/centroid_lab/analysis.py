"""Scoring recovered centroid distributions and multiphoton statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.signal import find_peaks

from .detection import CentroidHistogram, default_rho
from .sampler import EventBatch
from .states import JointGaussianState, StateModel, centroid_reference, jg_scalars, state_to_dict

__all__ = [
    "AnalysisError",
    "RecoveryReport",
    "CloseEventReport",
    "fit_scale",
    "rms_deviation",
    "default_window",
    "recover",
    "slope_estimate",
    "close_event_mask",
    "close_event_analysis",
    "gaussian_fit",
    "fit_width",
    "theoretical_rates",
    "count_fringes",
    "fringe_maxima",
    "DEFAULT_D_MP",
]

DEFAULT_D_MP = 1.0 / 400.0


class AnalysisError(ValueError):
    """Degenerate input to a fit or deviation measure."""


def fit_scale(reference, estimate) -> float:
    """Least-squares amplitude c minimising sum (ref - c z)^2."""
    ref = np.asarray(reference, dtype=float)
    z = np.asarray(estimate, dtype=float)
    if ref.shape != z.shape or ref.size == 0:
        raise AnalysisError("reference and estimate must be non-empty and of equal length")
    zz = float(np.dot(z, z))
    if zz == 0.0:
        raise AnalysisError("estimate is identically zero; scale fit is degenerate")
    return float(np.dot(ref, z)) / zz


def rms_deviation(reference, scaled_estimate) -> float:
    """(1/sqrt(b)) * sqrt(sum (ref_i - z_i)^2) over the b points."""
    ref = np.asarray(reference, dtype=float)
    z = np.asarray(scaled_estimate, dtype=float)
    if ref.shape != z.shape:
        raise AnalysisError("reference and estimate must have equal length")
    if ref.size == 0:
        raise AnalysisError("no points to compare")
    return float(np.sqrt(np.sum((ref - z) ** 2) / ref.size))


def default_window(n_photons: int) -> tuple[float, float]:
    half = default_rho(n_photons) / 2
    return (-half, half)


@dataclass
class RecoveryReport:
    scale: float
    rms: float
    b: int
    window: tuple[float, float]
    X: np.ndarray = field(repr=False)
    reference: np.ndarray = field(repr=False)
    raw_estimate: np.ndarray = field(repr=False)
    metadata: dict = field(default_factory=dict)

    @property
    def scaled_estimate(self) -> np.ndarray:
        return self.scale * self.raw_estimate

    def to_dict(self) -> dict:
        return {
            "scale": self.scale,
            "rms": self.rms,
            "b": self.b,
            "window": list(self.window),
            "metadata": self.metadata,
        }

    def points_table(self) -> np.ndarray:
        return np.column_stack([self.X, self.reference, self.raw_estimate, self.scaled_estimate])


def recover(
    histogram: CentroidHistogram,
    state: StateModel,
    window: tuple[float, float] | None = None,
) -> RecoveryReport:
    """Scale-fit a centroid histogram to the diagonal profile and score it.

    Only bins the detection plan can populate and whose centres lie in
    ``window`` enter the comparison; the window defaults to
    [-rho/2, rho/2] with rho = 7 lambda * 2/N.
    """
    if window is None:
        window = default_window(state.n_photons)
    lo, hi = window
    X = histogram.bin_centers
    tol = 1e-9 * histogram.bin_width
    sel = histogram.reachable & (X >= lo - tol) & (X <= hi + tol)
    if not np.any(sel):
        raise AnalysisError(f"no histogram bins inside window {window}")
    X = X[sel]
    z = histogram.counts[sel].astype(float)
    ref = centroid_reference(state, X)
    c = fit_scale(ref, z)
    return RecoveryReport(
        scale=c,
        rms=rms_deviation(ref, c * z),
        b=int(X.size),
        window=(float(lo), float(hi)),
        X=X,
        reference=ref,
        raw_estimate=z,
        metadata={"state": state_to_dict(state), **histogram.meta, "excluded": histogram.excluded},
    )


def fringe_maxima(
    histogram: CentroidHistogram,
    interval: tuple[float, float] = (-0.5, 0.5),
    *,
    prominence: float = 0.1,
    smooth: float = 0.01,
) -> np.ndarray:
    """Positions of the local maxima of a centroid histogram inside ``interval``.

    Counts are first smoothed with a Gaussian kernel of standard deviation
    ``smooth`` (in lambda), then maxima are found over the whole histogram,
    so a peak near the interval edge is judged against neighbours on both
    sides. Only peaks standing out by ``prominence`` times the largest
    smoothed count are kept, which rejects Poisson ripple.
    """
    counts = histogram.counts.astype(float)
    if counts.max() <= 0:
        raise AnalysisError("histogram is empty")
    if smooth > 0:
        counts = gaussian_filter1d(counts, smooth / histogram.bin_width, mode="constant")
    peaks, _ = find_peaks(counts, prominence=prominence * counts.max())
    X = histogram.bin_centers[peaks]
    lo, hi = interval
    return X[(X >= lo) & (X <= hi)]


def count_fringes(histogram: CentroidHistogram, interval=(-0.5, 0.5), **kwargs) -> int:
    """Fringes per wavelength, from the mean spacing of adjacent maxima in ``interval``.

    Counting via the spacing is insensitive to maxima that sit right on the
    interval edges.
    """
    X = fringe_maxima(histogram, interval, **kwargs)
    if X.size < 2:
        return int(X.size)
    return int(round((X.size - 1) / (X[-1] - X[0])))


def slope_estimate(sizes, rms_values, size_range=None) -> float:
    """Ordinary least-squares slope of rms against detector size within ``size_range``."""
    d = np.asarray(sizes, dtype=float)
    y = np.asarray(rms_values, dtype=float)
    if size_range is not None:
        lo, hi = size_range
        keep = (d >= lo) & (d <= hi)
        d, y = d[keep], y[keep]
    if d.size < 3:
        raise AnalysisError(f"need at least 3 points for a slope, got {d.size}")
    dc = d - d.mean()
    return float(np.dot(dc, y - y.mean()) / np.dot(dc, dc))


def theoretical_rates(n: int, r: float) -> tuple[float, float]:
    """Normalised total and peak multiphoton absorption rates at reduction factor r."""
    if not 1.0 <= r <= math.sqrt(n) * (1 + 1e-12):
        raise AnalysisError(f"r must lie in [1, sqrt(N)] = [1, {math.sqrt(n):.6g}], got {r}")
    r2 = r * r
    if abs(r2 - n) <= 1e-12 * n:
        r2 = float(n)  # sqrt(n) squared can miss n by an ulp
    base = max((n - r2) / (n - 1), 0.0)
    r_tot = base ** ((n - 1) / 2)
    return r_tot, r * r_tot


def gaussian_fit(centers, counts, *, min_bins: int = 10) -> tuple[float, float]:
    """Fit counts ~ c * exp(-d x^2) by count-weighted least squares on log counts.

    Returns ``(c, d)``.
    """
    x = np.asarray(centers, dtype=float)
    y = np.asarray(counts, dtype=float)
    pos = y > 0
    if pos.sum() < min_bins:
        raise AnalysisError(f"need at least {min_bins} non-empty bins, got {int(pos.sum())}")
    x, y = x[pos], y[pos]
    w = y
    A = np.column_stack([np.ones_like(x), x * x])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], np.log(y) * sw, rcond=None)
    log_c, slope = coef
    d = -slope
    if not d > 0:
        raise AnalysisError(f"fitted curvature d = {d:.3g} is not positive; data are not Gaussian")
    return float(math.exp(log_c)), float(d)


def fit_width(d: float) -> float:
    """Full width 2/sqrt(2d) of c*exp(-d x^2), i.e. twice the rms width."""
    return 2.0 / math.sqrt(2.0 * d)


def close_event_mask(positions, d_mp: float) -> np.ndarray:
    """Events whose photons all lie within d_mp of each other (max pairwise distance)."""
    pos = np.asarray(positions, dtype=float)
    spread = pos.max(axis=1) - pos.min(axis=1)
    return spread <= d_mp


@dataclass
class CloseEventReport:
    d_mp: float
    n_close: int
    n_total: int
    fraction: float
    r_value: float | None = None
    r_tot: float | None = None
    r_peak: float | None = None
    gauss_c: float | None = None
    gauss_d: float | None = None
    width_w: float | None = None
    width_full: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def close_event_analysis(
    batch: EventBatch,
    d_mp: float = DEFAULT_D_MP,
    *,
    state: JointGaussianState | None = None,
    reference_fraction: float | None = None,
    n_bins: int = 15,
    fit: bool = True,
) -> CloseEventReport:
    """Count close events of a continuous batch and fit their centroid profile.

    ``reference_fraction`` is the close-event fraction measured at r = 1; when
    given, r_tot is normalised by it. ``width_w`` is the rms width 1/sqrt(2d)
    of the fitted Gaussian, ``width_full`` the full width 2/sqrt(2d).
    """
    if not d_mp > 0:
        raise AnalysisError("d_mp must be positive")
    close = close_event_mask(batch.positions, d_mp)
    n_close = int(close.sum())
    report = CloseEventReport(
        d_mp=d_mp, n_close=n_close, n_total=batch.n_events, fraction=n_close / batch.n_events
    )
    if state is not None:
        report.r_value = jg_scalars(state).r
    if reference_fraction is not None:
        report.r_tot = report.fraction / reference_fraction
        if report.r_value is not None:
            report.r_peak = report.r_value * report.r_tot
    if fit:
        X = batch.positions[close].mean(axis=1)
        if X.size == 0:
            raise AnalysisError("no close events to fit")
        half = 3.0 * X.std() if X.size > 1 else 1.0
        counts, edges = np.histogram(X, bins=n_bins, range=(-half, half))
        centers = 0.5 * (edges[1:] + edges[:-1])
        c, d = gaussian_fit(centers, counts)
        report.gauss_c, report.gauss_d = c, d
        report.width_w = 1.0 / math.sqrt(2.0 * d)
        report.width_full = fit_width(d)
    return report
