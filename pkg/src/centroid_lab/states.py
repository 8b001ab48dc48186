"""Position-space densities of the trial N-photon states.

All positions are measured in units of the transverse wavelength lambda.
Densities are returned without their overall normalisation constants unless
stated otherwise; every downstream comparison fits the amplitude anyway.
"""
from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass
from typing import Union

import numpy as np

__all__ = [
    "NoonState",
    "JointGaussianState",
    "CatState",
    "StateModel",
    "StateError",
    "state_from_dict",
    "state_to_dict",
    "density",
    "noon_density",
    "jg_density",
    "cat_density",
    "cat_density_imaginary_alpha",
    "centroid_reference",
    "centroid_direction_log_density",
    "photon_number_probability",
    "cat_normalization",
    "jg_scalars",
    "JGScalars",
]

DEFAULT_SIGMA = 4.0 * math.sqrt(2.0) * math.pi
SUPPORTED_N = (2, 3, 4)


class StateError(ValueError):
    """Invalid state parameters or a state/operation mismatch."""


@dataclass(frozen=True)
class NoonState:
    n_photons: int = 2
    sigma: float = DEFAULT_SIGMA

    def __post_init__(self):
        if self.n_photons not in SUPPORTED_N:
            raise StateError(f"NOON states need n_photons in {SUPPORTED_N}, got {self.n_photons}")
        if not self.sigma > 0:
            raise StateError(f"sigma must be positive, got {self.sigma}")

    @property
    def delta_k(self) -> float:
        """Momentum spread in units of 1/lambda (k0 = 2 pi / lambda)."""
        return 2.0 * math.pi / self.sigma

    @property
    def envelope_rate(self) -> float:
        """Coefficient a of exp(-a * sum x_i^2)."""
        return 4.0 * math.pi**2 / self.sigma**2


@dataclass(frozen=True)
class JointGaussianState:
    n_photons: int = 2
    b_width: float = 1.0
    beta_width: float = 1.0

    def __post_init__(self):
        if self.n_photons not in SUPPORTED_N:
            raise StateError(
                f"jointly Gaussian states need n_photons in {SUPPORTED_N}, got {self.n_photons}"
            )
        # closed-form eigenvalues of the position-space quadratic form
        for name, eig in (("N*B^2", self.centroid_eigenvalue), ("beta^2", self.relative_eigenvalue)):
            if not eig > 0:
                raise StateError(f"B matrix is not positive definite: eigenvalue {name} = {eig}")

    @property
    def centroid_eigenvalue(self) -> float:
        return self.n_photons * self.b_width**2

    @property
    def relative_eigenvalue(self) -> float:
        return self.beta_width**2

    @property
    def k_variance(self) -> float:
        n = self.n_photons
        return self.b_width**2 + (1.0 - 1.0 / n) * self.beta_width**2

    @property
    def is_admissible(self) -> bool:
        """True inside the classical-to-quantum range beta/sqrt(N) <= B <= sqrt(<k_n^2>)."""
        lo = self.beta_width / math.sqrt(self.n_photons)
        hi = math.sqrt(self.k_variance)
        tol = 1e-12 * max(1.0, hi)
        return lo - tol <= self.b_width <= hi + tol

    @property
    def is_classical(self) -> bool:
        return math.isclose(self.b_width, self.beta_width / math.sqrt(self.n_photons), rel_tol=1e-12)

    @classmethod
    def from_k_variance(cls, n_photons: int, b_width: float, k_variance: float) -> "JointGaussianState":
        """Solve <k_n^2> = B^2 + (1 - 1/N) beta^2 for beta at fixed B."""
        beta_sq = (k_variance - b_width**2) / (1.0 - 1.0 / n_photons)
        if not beta_sq > 0:
            raise StateError(
                f"B = {b_width} is inadmissible for <k_n^2> = {k_variance} (beta^2 = {beta_sq})"
            )
        return cls(n_photons=n_photons, b_width=b_width, beta_width=math.sqrt(beta_sq))


@dataclass(frozen=True)
class CatState:
    alpha_mag: float = 1.0
    alpha_phase: float = math.pi / 2
    x0: float = 1.0
    n_photons: int = 2

    def __post_init__(self):
        if self.n_photons != 2:
            raise StateError(
                "cat states are analysed for one photon per mode only (n_photons must be 2)"
            )
        if self.alpha_mag < 0:
            raise StateError(f"alpha_mag must be non-negative, got {self.alpha_mag}")
        if not self.x0 > 0:
            raise StateError(f"x0 must be positive, got {self.x0}")

    @property
    def alpha(self) -> complex:
        return self.alpha_mag * complex(math.cos(self.alpha_phase), math.sin(self.alpha_phase))

    @property
    def normalization(self) -> float:
        return cat_normalization(self.alpha_mag)


StateModel = Union[NoonState, JointGaussianState, CatState]

_TYPE_TAGS = {"noon": NoonState, "jg": JointGaussianState, "cat": CatState}
_ALLOWED_KEYS = {"type", "n", "sigma", "b", "beta", "alpha_mag", "alpha_phase", "x0"}


def state_from_dict(cfg: dict) -> StateModel:
    """Build a state from its JSON fragment.

    ``{"type": "noon"|"jg"|"cat", "n": ..., "sigma": ..., "b": ..., "beta": ...,
    "alpha_mag": ..., "alpha_phase": ...}``; keys that do not apply to the chosen
    type may be present but must be null. Unknown keys are rejected.
    """
    unknown = set(cfg) - _ALLOWED_KEYS
    if unknown:
        raise StateError(f"unknown state keys: {sorted(unknown)}")
    kind = cfg.get("type")
    if kind not in _TYPE_TAGS:
        raise StateError(f"state type must be one of {sorted(_TYPE_TAGS)}, got {kind!r}")

    def get(key, default):
        value = cfg.get(key)
        return default if value is None else value

    if kind == "noon":
        _reject_foreign(cfg, kind, {"b", "beta", "alpha_mag", "alpha_phase", "x0"})
        return NoonState(n_photons=int(get("n", 2)), sigma=float(get("sigma", DEFAULT_SIGMA)))
    if kind == "jg":
        _reject_foreign(cfg, kind, {"sigma", "alpha_mag", "alpha_phase", "x0"})
        if cfg.get("b") is None or cfg.get("beta") is None:
            raise StateError("jg states need both 'b' and 'beta'")
        return JointGaussianState(
            n_photons=int(get("n", 2)), b_width=float(cfg["b"]), beta_width=float(cfg["beta"])
        )
    _reject_foreign(cfg, kind, {"sigma", "b", "beta"})
    return CatState(
        alpha_mag=float(get("alpha_mag", 1.0)),
        alpha_phase=float(get("alpha_phase", math.pi / 2)),
        x0=float(get("x0", 1.0)),
        n_photons=int(get("n", 2)),
    )


def _reject_foreign(cfg, kind, keys):
    bad = sorted(k for k in keys if cfg.get(k) is not None)
    if bad:
        raise StateError(f"keys {bad} do not apply to state type {kind!r}")


def state_to_dict(state: StateModel) -> dict:
    if isinstance(state, NoonState):
        return {"type": "noon", "n": state.n_photons, "sigma": state.sigma}
    if isinstance(state, JointGaussianState):
        return {"type": "jg", "n": state.n_photons, "b": state.b_width, "beta": state.beta_width}
    if isinstance(state, CatState):
        d = asdict(state)
        return {
            "type": "cat",
            "n": 2,
            "alpha_mag": d["alpha_mag"],
            "alpha_phase": d["alpha_phase"],
            "x0": d["x0"],
        }
    raise StateError(f"not a state: {state!r}")


def _positions(xs, n):
    xs = np.asarray(xs, dtype=float)
    if xs.shape[-1] != n:
        raise StateError(f"expected {n} positions per event, got shape {xs.shape}")
    return xs


def noon_density(state: NoonState, xs) -> np.ndarray:
    """Normalised NOON density 2 (dk/sqrt(pi))^N exp(-dk^2 sum x^2) cos^2(2 pi sum x).

    ``xs`` has shape ``(..., N)``; the result drops the last axis.
    """
    xs = _positions(xs, state.n_photons)
    pref = 2.0 * (state.delta_k / math.sqrt(math.pi)) ** state.n_photons
    total = xs.sum(axis=-1)
    return pref * np.exp(-state.envelope_rate * (xs**2).sum(axis=-1)) * np.cos(2 * np.pi * total) ** 2


def _jg_quadratic(state: JointGaussianState, xs):
    n = state.n_photons
    along = xs.sum(axis=-1) / math.sqrt(n)
    # |x|^2 = along^2 + |orthogonal part|^2
    ortho_sq = np.maximum((xs**2).sum(axis=-1) - along**2, 0.0)
    return state.centroid_eigenvalue * along**2 + state.relative_eigenvalue * ortho_sq


def jg_density(state: JointGaussianState, xs) -> np.ndarray:
    """Unnormalised jointly Gaussian density exp(-2 x^T B^-1 x)."""
    xs = _positions(xs, state.n_photons)
    return np.exp(-2.0 * _jg_quadratic(state, xs))


def cat_normalization(alpha_mag: float) -> float:
    return 1.0 / math.sqrt(2.0 * (1.0 + math.exp(-4.0 * alpha_mag**2)))


def _cat_cosh_sq(state: CatState, total):
    """|cosh(2 pi sqrt(2) alpha (x1 + x2))|^2 evaluated in real arithmetic."""
    z_scale = 2.0 * math.pi * math.sqrt(2.0) * state.alpha_mag
    re = z_scale * math.cos(state.alpha_phase) * total
    im = z_scale * math.sin(state.alpha_phase) * total
    return 0.5 * (np.cosh(2.0 * re) + np.cos(2.0 * im))


def cat_density(state: CatState, x1, x2) -> np.ndarray:
    """|psi_ccc(x1, x2)|^2 for a general phase of alpha, dimensionless positions.

    Constant phase factors of the wave function are dropped; the prefactor
    4 N^2 / (pi x0^2) is kept so that phi = pi/2 matches the closed form.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    pref = 4.0 * state.normalization**2 / (math.pi * state.x0**2)
    envelope = np.exp(-4.0 * math.pi**2 * (x1**2 + x2**2))
    return pref * envelope * _cat_cosh_sq(state, x1 + x2)


def cat_density_imaginary_alpha(state: CatState, x1, x2) -> np.ndarray:
    """Closed form for alpha = i|alpha|; ignores ``state.alpha_phase``."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    pref = 4.0 * state.normalization**2 / (math.pi * state.x0**2)
    return (
        pref
        * np.exp(-4.0 * math.pi**2 * (x1**2 + x2**2))
        * np.cos(2.0 * math.pi * math.sqrt(2.0) * state.alpha_mag * (x1 + x2)) ** 2
    )


def density(state: StateModel, xs) -> np.ndarray:
    """Evaluate the position density of any state on positions of shape (..., N)."""
    if isinstance(state, NoonState):
        return noon_density(state, xs)
    if isinstance(state, JointGaussianState):
        return jg_density(state, xs)
    if isinstance(state, CatState):
        xs = _positions(xs, 2)
        return cat_density(state, xs[..., 0], xs[..., 1])
    raise StateError(f"not a state: {state!r}")


def centroid_reference(state: StateModel, X) -> np.ndarray:
    """Diagonal profile density(X, ..., X) with the overall constant dropped.

    NOON and JG profiles peak at 1 at X = 0. The cat profile is the
    normalised joint density on the diagonal, so that states with different
    |alpha| or phi share one overall scale and differ only in shape.
    """
    X = np.asarray(X, dtype=float)
    if isinstance(state, NoonState):
        n = state.n_photons
        return np.exp(-n * state.envelope_rate * X**2) * np.cos(2 * np.pi * n * X) ** 2
    if isinstance(state, JointGaussianState):
        n = state.n_photons
        return np.exp(-2.0 * n**2 * state.b_width**2 * X**2)
    if isinstance(state, CatState):
        # the diagonal (X, X) sits at y = sqrt(2) X on the centroid axis and at
        # 0 on the relative axis, whose normalised Gaussian peaks at 2 sqrt(pi)
        log_p = centroid_direction_log_density(state, math.sqrt(2.0) * X)
        return 2.0 * math.sqrt(math.pi) * np.exp(log_p - _cat_log_norm(state))
    raise StateError(f"not a state: {state!r}")


@functools.lru_cache(maxsize=64)
def _cat_log_norm(state: CatState) -> float:
    """log of the integral of exp(centroid_direction_log_density) over y."""
    reach = state.alpha_mag * abs(math.cos(state.alpha_phase)) / math.pi + 2.0
    y = np.linspace(-reach, reach, 2**16 + 1)
    log_p = centroid_direction_log_density(state, y)
    top = float(log_p.max())
    return top + math.log(float(np.trapezoid(np.exp(log_p - top), y)))


def centroid_direction_log_density(state: StateModel, y) -> np.ndarray:
    """Log of the unnormalised density of y = sum(x) / sqrt(N).

    This is the one transformed coordinate that is not plain Gaussian for
    NOON and cat states. Returned in log form so large |alpha| does not
    overflow.
    """
    y = np.asarray(y, dtype=float)
    if isinstance(state, NoonState):
        n = state.n_photons
        with np.errstate(divide="ignore"):
            return -state.envelope_rate * y**2 + 2.0 * np.log(
                np.abs(np.cos(2 * np.pi * math.sqrt(n) * y))
            )
    if isinstance(state, JointGaussianState):
        return -2.0 * state.centroid_eigenvalue * y**2
    if isinstance(state, CatState):
        z_scale = 2.0 * math.pi * math.sqrt(2.0) * state.alpha_mag * math.sqrt(2.0)
        a = 2.0 * z_scale * math.cos(state.alpha_phase) * y
        b = 2.0 * z_scale * math.sin(state.alpha_phase) * y
        # log((cosh a + cos b) / 2) = log cosh a + log1p(cos b / cosh a) - log 2
        abs_a = np.abs(a)
        log_cosh = abs_a + np.log1p(np.exp(-2.0 * abs_a)) - math.log(2.0)
        ratio = np.cos(b) * np.exp(-log_cosh)
        with np.errstate(divide="ignore"):
            return -4.0 * math.pi**2 * y**2 + log_cosh + np.log1p(ratio) - math.log(2.0)
    raise StateError(f"not a state: {state!r}")


def photon_number_probability(state: CatState, n1: int, n2: int) -> float:
    """Probability of finding n1 photons in mode 1 and n2 in mode 2."""
    if n1 < 0 or n2 < 0:
        raise StateError("photon numbers must be non-negative")
    if (n1 + n2) % 2:
        return 0.0
    a2 = state.alpha_mag**2
    log_p = -2.0 * a2 - math.lgamma(n1 + 1) - math.lgamma(n2 + 1)
    if n1 + n2:
        if a2 == 0.0:
            return 0.0
        log_p += (n1 + n2) * math.log(a2)
    return 4.0 * state.normalization**2 * math.exp(log_p)


@dataclass(frozen=True)
class JGScalars:
    k_variance: float
    r: float
    w_classical: float
    w_min: float


def jg_scalars(state: JointGaussianState) -> JGScalars:
    n = state.n_photons
    kv = state.k_variance
    return JGScalars(
        k_variance=kv,
        r=math.sqrt(n) * state.b_width / math.sqrt(kv),
        w_classical=1.0 / (2.0 * math.sqrt(n * kv)),
        w_min=1.0 / (2.0 * n * math.sqrt(kv)),
    )
