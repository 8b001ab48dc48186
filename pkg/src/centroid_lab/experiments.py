"""Configuration-driven experiment commands.

Each ``cmd_*`` function is a pure function of its :class:`ExperimentConfig`
(seed included): it samples events, runs the detection and recovery
pipeline, writes one or more CSV files into ``output_dir`` and returns the
rows it wrote. Every CSV header records the command, the full config and
its SHA-256 hash.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import io
from .analysis import (
    AnalysisError,
    DEFAULT_D_MP,
    close_event_analysis,
    recover,
    theoretical_rates,
)
from .detection import DetectorArray, ShiftPlan, centroid_histogram, default_rho, run_plan
from .sampler import sample_events, split_batch
from .states import (
    CatState,
    JointGaussianState,
    StateError,
    centroid_reference,
    jg_scalars,
    state_from_dict,
)

__all__ = [
    "ConfigError",
    "DetectorConfig",
    "ExperimentConfig",
    "default_multipliers",
    "fixed_feature_states",
    "COMMANDS",
    "cmd_sample",
    "cmd_sweep_size",
    "cmd_sweep_shift",
    "cmd_subsets",
    "cmd_mpa",
    "cmd_fixed_feature",
    "cmd_cat",
]


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


def default_multipliers() -> list[int]:
    """Size multipliers of d0_min = lambda/1000 spanning lambda/1000 .. 1.2 lambda.

    Roughly geometric below lambda/10 and linear above, with lambda/4,
    lambda/2 and lambda on the grid.
    """
    small = [1, 2, 3, 5, 7, 10, 15, 20, 30, 40, 50, 70]
    large = list(range(100, 1201, 50))
    return small + large


@dataclass
class DetectorConfig:
    d0_min: float = 0.001
    size_multipliers: list[int] = field(default_factory=default_multipliers)
    rho: float | None = None


@dataclass
class ExperimentConfig:
    state: dict = field(default_factory=lambda: {"type": "noon", "n": 2})
    n_events: int | None = None
    seed: int = 1
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    method: str = "I"
    window: list[float] | None = None
    output_dir: str = "."
    # command specific
    shift_sizes: list[float] = field(default_factory=lambda: [0.1, 0.25, 0.3, 0.5, 1.0])
    shift_points: int = 20
    subset_counts: list[int] = field(default_factory=lambda: [1, 2, 5, 10])
    k_variance: float = 1.0
    b_grid: list[float] | None = None
    d_mp: float = DEFAULT_D_MP
    alpha_grid: list[float] = field(
        default_factory=lambda: [1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0]
    )
    phi_grid: list[float] = field(
        default_factory=lambda: [0.0, math.pi / 8, 3 * math.pi / 8, math.pi / 2]
    )
    cat_detector_size: float = 0.01
    write_reports: bool = False

    def __post_init__(self):
        if isinstance(self.detector, dict):
            unknown = set(self.detector) - {f.name for f in fields(DetectorConfig)}
            if unknown:
                raise ConfigError(f"unknown detector keys: {sorted(unknown)}")
            self.detector = DetectorConfig(**self.detector)
        self.validate()

    def validate(self):
        try:
            self.state_model()
        except StateError as exc:
            raise ConfigError(str(exc)) from exc
        if self.n_events is not None and int(self.n_events) < 1:
            raise ConfigError("n_events must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.method not in ("I", "II"):
            raise ConfigError(f"method must be 'I' or 'II', got {self.method!r}")
        det = self.detector
        if not det.d0_min > 0:
            raise ConfigError("detector.d0_min must be positive")
        if not det.size_multipliers or any(int(m) != m or m < 1 for m in det.size_multipliers):
            raise ConfigError("detector.size_multipliers must be a non-empty list of positive integers")
        if det.rho is not None and not det.rho > 0:
            raise ConfigError("detector.rho must be positive")
        if self.window is not None and (len(self.window) != 2 or not self.window[0] < self.window[1]):
            raise ConfigError("window must be [lo, hi] with lo < hi")
        positive = {
            "k_variance": self.k_variance,
            "d_mp": self.d_mp,
            "cat_detector_size": self.cat_detector_size,
            "shift_points": self.shift_points,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ConfigError(f"{name} must be positive")
        if any(not s > 0 for s in self.shift_sizes):
            raise ConfigError("shift_sizes must be positive")
        if any(int(k) != k or k < 1 for k in self.subset_counts):
            raise ConfigError("subset_counts must be positive integers")
        if self.b_grid is not None and any(not b > 0 for b in self.b_grid):
            raise ConfigError("b_grid values must be positive")
        if any(a < 0 for a in self.alpha_grid):
            raise ConfigError("alpha_grid values must be non-negative")

    # serialisation

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_json(text)

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON config; the output location is left out."""
        data = self.to_dict()
        data.pop("output_dir")
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()

    # derived values

    def state_model(self):
        return state_from_dict(self.state)

    def events(self, default: int = 10**6) -> int:
        return int(self.n_events) if self.n_events is not None else default

    def rho(self, n_photons: int) -> float:
        return self.detector.rho if self.detector.rho is not None else default_rho(n_photons)

    def comparison_window(self, n_photons: int):
        if self.window is not None:
            return tuple(self.window)
        half = default_rho(n_photons) / 2
        return (-half, half)

    def out_path(self, name: str) -> Path:
        out = Path(self.output_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
        if not os.access(out, os.W_OK):
            raise ConfigError(f"output directory {out} is not writable")
        return out / name


def _meta(config: ExperimentConfig, command: str, **extra) -> dict:
    config_dict = config.to_dict()
    config_dict.pop("output_dir")
    meta = {"command": command, "config_hash": config.config_hash(), "config": config_dict}
    meta.update(extra)
    return meta


def _map(fn, items, threads: int):
    items = list(items)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _size_sweep(batch, state, config: ExperimentConfig, threads: int = 1, method=None):
    """(detector_size, rms, method, n_shifts, scale, b, excluded) for every multiplier."""
    method = method or config.method
    rho = config.rho(state.n_photons)
    window = config.comparison_window(state.n_photons)

    def one(m):
        plan = ShiftPlan(config.detector.d0_min, int(m), method)
        report = recover(run_plan(batch, plan, rho), state, window)
        return (plan.detector_size, report.rms, method, int(m), report.scale, report.b,
                int(report.metadata["excluded"]))

    return _map(one, config.detector.size_multipliers, threads)


SWEEP_COLUMNS = ["detector_size", "rms", "method", "n_shifts", "scale", "b", "excluded"]


def cmd_sample(config: ExperimentConfig, threads: int = 1) -> dict:
    state = config.state_model()
    batch = sample_events(state, config.events(), config.seed, threads=threads)
    path = io.write_events(batch, config.out_path("events.csv"),
                           extra={"config_hash": config.config_hash()})
    return {"path": path, "n_photons": batch.n_photons, "n_events": batch.n_events, "seed": config.seed}


def cmd_sweep_size(config: ExperimentConfig, threads: int = 1) -> dict:
    state = config.state_model()
    batch = sample_events(state, config.events(), config.seed, threads=threads)
    rows = _size_sweep(batch, state, config, threads)
    path = io.write_rows(config.out_path("sweep_size.csv"), SWEEP_COLUMNS, rows,
                         _meta(config, "sweep-size"))
    if config.write_reports:
        rho = config.rho(state.n_photons)
        for m in config.detector.size_multipliers:
            plan = ShiftPlan(config.detector.d0_min, int(m), config.method)
            report = recover(run_plan(batch, plan, rho), state, config.comparison_window(state.n_photons))
            io.write_report(report, config.out_path(f"report_m{int(m)}.json"))
    return {"path": path, "rows": rows}


def cmd_sweep_shift(config: ExperimentConfig, threads: int = 1) -> dict:
    """Single fixed arrays at shifts k*d/shift_points, each fitted on its own."""
    state = config.state_model()
    batch = sample_events(state, config.events(), config.seed, threads=threads)
    rho = config.rho(state.n_photons)
    window = config.comparison_window(state.n_photons)
    cells = [(d, k * d / config.shift_points) for d in config.shift_sizes
             for k in range(config.shift_points)]

    def one(cell):
        d, s = cell
        hist = centroid_histogram(batch, DetectorArray(d, s, rho))
        return (d, s, recover(hist, state, window).rms)

    rows = _map(one, cells, threads)
    path = io.write_rows(config.out_path("sweep_shift.csv"), ["detector_size", "shift", "rms"], rows,
                         _meta(config, "sweep-shift"))
    return {"path": path, "rows": rows}


def cmd_subsets(config: ExperimentConfig, threads: int = 1) -> dict:
    """Size sweeps on k disjoint subsets, averaged pointwise for every k."""
    state = config.state_model()
    batch = sample_events(state, config.events(), config.seed, threads=threads)
    rows = []
    for k in config.subset_counts:
        if k > batch.n_events:
            raise ConfigError(f"cannot split {batch.n_events} events into {k} subsets")
        parts, _ = split_batch(batch, int(k))
        curves = np.array([[r[1] for r in _size_sweep(p, state, config, threads)] for p in parts])
        sizes = [m * config.detector.d0_min for m in config.detector.size_multipliers]
        spread = curves.std(axis=0, ddof=1) if k > 1 else np.zeros(len(sizes))
        for d, mean, sd in zip(sizes, curves.mean(axis=0), spread):
            rows.append((int(k), parts[0].n_events, d, float(mean), float(sd)))
    path = io.write_rows(
        config.out_path("subsets.csv"),
        ["n_subsets", "subset_size", "detector_size", "rms_mean", "rms_std"],
        rows,
        _meta(config, "subsets"),
    )
    return {"path": path, "rows": rows}


def default_b_grid(n: int, k_variance: float, points: int = 12) -> list[float]:
    """B values for r from 1 up to 0.98 sqrt(N) at fixed <k^2>."""
    rs = np.linspace(1.0, 0.98 * math.sqrt(n), points)
    return [float(r * math.sqrt(k_variance / n)) for r in rs]


MPA_COLUMNS = [
    "b", "beta", "r", "n_close", "n_total", "fraction", "r_tot", "r_tot_theory",
    "r_peak", "r_peak_theory", "width_w", "width_full", "w_classical", "w_min",
]


def cmd_mpa(config: ExperimentConfig, threads: int = 1) -> dict:
    """Close-event statistics of continuous JG events across a B grid.

    Every B uses the same seed, so all points share their underlying random
    numbers; R_tot is normalised by the close-event fraction of the r = 1
    state sampled the same way.
    """
    if config.state.get("type") != "jg":
        raise ConfigError("mpa needs a jg state (its 'b' and 'beta' are replaced by the B grid)")
    n = int(config.state.get("n") or 2)
    kv = config.k_variance
    b_grid = config.b_grid if config.b_grid is not None else default_b_grid(n, kv)
    try:
        states = [JointGaussianState.from_k_variance(n, b, kv) for b in b_grid]
        reference_state = JointGaussianState.from_k_variance(n, math.sqrt(kv / n), kv)
    except StateError as exc:
        raise ConfigError(str(exc)) from exc
    n_events = config.events()

    ref = sample_events(reference_state, n_events, config.seed, threads=threads)
    ref_fraction = close_event_analysis(ref, config.d_mp, fit=False).fraction
    if ref_fraction == 0:
        raise AnalysisError("no close events at r = 1; increase n_events or d_mp")

    rows = []
    for st in states:
        batch = sample_events(st, n_events, config.seed, threads=threads)
        try:
            rep = close_event_analysis(batch, config.d_mp, state=st, reference_fraction=ref_fraction)
        except AnalysisError:
            rep = close_event_analysis(batch, config.d_mp, state=st, reference_fraction=ref_fraction,
                                       fit=False)
        sc = jg_scalars(st)
        if 1.0 <= sc.r <= math.sqrt(n):
            t_tot, t_peak = theoretical_rates(n, sc.r)
        else:
            t_tot = t_peak = math.nan
        nan = math.nan
        rows.append((
            st.b_width, st.beta_width, sc.r, rep.n_close, rep.n_total, rep.fraction, rep.r_tot,
            t_tot, rep.r_peak, t_peak,
            rep.width_w if rep.width_w is not None else nan,
            rep.width_full if rep.width_full is not None else nan,
            sc.w_classical, sc.w_min,
        ))
    path = io.write_rows(config.out_path("mpa.csv"), MPA_COLUMNS, rows,
                         _meta(config, "mpa", reference_fraction=ref_fraction))
    return {"path": path, "rows": rows, "reference_fraction": ref_fraction}


def fixed_feature_states() -> list[JointGaussianState]:
    """JG states with B = 2/N and a common centroid envelope exp(-8 X^2)."""
    return [
        JointGaussianState(2, 1.0, 1.0),
        JointGaussianState(3, 2.0 / 3.0, 1.0),
        JointGaussianState(4, 0.5, 0.8),
    ]


def cmd_fixed_feature(config: ExperimentConfig, threads: int = 1) -> dict:
    rows = []
    for st in fixed_feature_states():
        batch = sample_events(st, config.events(), config.seed, threads=threads)
        for row in _size_sweep(batch, st, config, threads):
            rows.append((st.n_photons, st.b_width, st.beta_width) + row[:2])
    path = io.write_rows(config.out_path("fixed_feature.csv"),
                         ["n", "b", "beta", "detector_size", "rms"], rows,
                         _meta(config, "fixed-feature"))
    return {"path": path, "rows": rows}


def _cat_rms(state: CatState, config: ExperimentConfig, threads: int) -> float:
    batch = sample_events(state, config.events(10**5), config.seed, threads=threads)
    hist = run_plan(batch, ShiftPlan(config.cat_detector_size, 1, "I"), config.rho(2))
    return recover(hist, state, config.comparison_window(2)).rms


def cmd_cat(config: ExperimentConfig, threads: int = 1) -> dict:
    """rms against |alpha| (phase from the config state) and against phi at |alpha| = 1."""
    if config.state.get("type") != "cat":
        raise ConfigError("cat needs a cat state")
    base = config.state_model()
    alpha_rows = []
    for a in config.alpha_grid:
        st = CatState(a, base.alpha_phase, base.x0)
        alpha_rows.append((float(a), base.alpha_phase, _cat_rms(st, config, threads)))
    phi_rows = []
    for phi in config.phi_grid:
        st = CatState(1.0, float(phi), base.x0)
        phi_rows.append((1.0, float(phi), _cat_rms(st, config, threads)))

    X = np.linspace(-0.5, 0.5, 1001)
    profile_states = [CatState(a, base.alpha_phase, base.x0) for a in config.alpha_grid]
    profile_states += [CatState(1.0, float(phi), base.x0) for phi in config.phi_grid]
    profile_states = list(dict.fromkeys(profile_states))
    profile_rows = [
        (st.alpha_mag, st.alpha_phase, float(x), float(v))
        for st in profile_states
        for x, v in zip(X, centroid_reference(st, X))
    ]
    meta = _meta(config, "cat", detector_size=config.cat_detector_size)
    cols = ["alpha_mag", "alpha_phase", "rms"]
    p1 = io.write_rows(config.out_path("cat_alpha.csv"), cols, alpha_rows, meta)
    p2 = io.write_rows(config.out_path("cat_phi.csv"), cols, phi_rows, meta)
    p3 = io.write_rows(config.out_path("cat_profiles.csv"),
                       ["alpha_mag", "alpha_phase", "X", "reference"], profile_rows, meta)
    return {"paths": [p1, p2, p3], "alpha_rows": alpha_rows, "phi_rows": phi_rows}


COMMANDS = {
    "sample": cmd_sample,
    "sweep-size": cmd_sweep_size,
    "sweep-shift": cmd_sweep_shift,
    "subsets": cmd_subsets,
    "mpa": cmd_mpa,
    "fixed-feature": cmd_fixed_feature,
    "cat": cmd_cat,
}
