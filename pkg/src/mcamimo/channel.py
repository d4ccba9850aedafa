"""Channel realizations for the uplink massive MIMO model.

The complex channel factors as ``H~ = G~ diag(sqrt(lambda))`` where ``G~`` holds
i.i.d. Rayleigh small-scale fading and ``lambda`` the per-user large-scale
path gains. Detection works on the real-valued expansion

    H = [[Re H~, -Im H~], [Im H~, Re H~]] = G @ Lambda,

with ``Lambda = diag(sqrt(lambda), sqrt(lambda))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionError, ParameterError

DEFAULT_SIGMA_G = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class ComplexChannel:
    """Complex channel ``H_tilde = G_tilde * sqrt(lam)`` (column scaling)."""

    G_tilde: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        G = np.asarray(self.G_tilde, dtype=complex)
        lam = np.asarray(self.lam, dtype=float)
        if G.ndim != 2:
            raise DimensionError(f"G_tilde must be 2-D, got shape {G.shape}")
        if lam.shape != (G.shape[1],):
            raise DimensionError(f"lam has shape {lam.shape}, expected ({G.shape[1]},)")
        if np.any(lam <= 0):
            raise ParameterError("large-scale gains must be positive")
        object.__setattr__(self, "G_tilde", G)
        object.__setattr__(self, "lam", lam)

    @property
    def R(self) -> int:
        return self.G_tilde.shape[0]

    @property
    def K(self) -> int:
        return self.G_tilde.shape[1]

    @property
    def H_tilde(self) -> np.ndarray:
        return self.G_tilde * np.sqrt(self.lam)[None, :]

    def with_lsfc(self, lam) -> "ComplexChannel":
        return ComplexChannel(self.G_tilde, lam)


@dataclass(frozen=True)
class RealChannel:
    """Real-valued expansion: ``H = G @ Lambda`` with ``G`` of shape (2R, 2K)."""

    G: np.ndarray
    Lambda: np.ndarray
    H: np.ndarray
    lam: np.ndarray

    @property
    def R(self) -> int:
        return self.G.shape[0] // 2

    @property
    def K(self) -> int:
        return self.G.shape[1] // 2

    @property
    def lambda_sqrt(self) -> np.ndarray:
        """Diagonal of ``Lambda`` (length 2K)."""
        return np.diag(self.Lambda).copy()


# Path-loss models: distance [m], carrier [Hz] -> loss [dB].


def pathloss_macro_2ghz(d_m, f_hz=2e9):
    """Log-distance macro-cell model, PL = 128.1 + 37.6 log10(d_km)."""
    return 128.1 + 37.6 * np.log10(np.asarray(d_m, dtype=float) / 1e3)


def pathloss_free_space(d_m, f_hz=2e9):
    return 20.0 * np.log10(np.asarray(d_m, dtype=float)) + 20.0 * np.log10(f_hz) - 147.55


PATHLOSS_MODELS: dict[str, Callable] = {
    "macro-128.1-37.6": pathloss_macro_2ghz,
    "free-space": pathloss_free_space,
}


@dataclass(frozen=True)
class CellScenario:
    """Single-cell geometry and link budget.

    Units: meters, Hz, dBm, dB. ``pathloss_model`` names an entry of
    :data:`PATHLOSS_MODELS`.
    """

    radius: float = 150.0
    carrier_freq: float = 2e9
    bandwidth: float = 25e6
    tx_power: float = 20.0
    noise_figure: float = 9.0
    min_distance: float = 10.0
    pathloss_model: str = "macro-128.1-37.6"

    def __post_init__(self):
        if not (self.radius > self.min_distance > 0):
            raise ParameterError(
                f"need radius > min_distance > 0, got {self.radius}, {self.min_distance}"
            )
        if self.bandwidth <= 0:
            raise ParameterError("bandwidth must be positive")
        if self.pathloss_model not in PATHLOSS_MODELS:
            raise ParameterError(
                f"unknown path-loss model {self.pathloss_model!r}; "
                f"choose from {sorted(PATHLOSS_MODELS)}"
            )

    @property
    def noise_power_dbm(self) -> float:
        """Thermal noise over the band: -174 dBm/Hz + 10 log10(B) + NF."""
        return -174.0 + 10.0 * math.log10(self.bandwidth) + self.noise_figure

    @property
    def noise_to_tx_ratio(self) -> float:
        """Noise power relative to the per-UT transmit power (linear)."""
        return 10.0 ** ((self.noise_power_dbm - self.tx_power) / 10.0)

    def path_gain(self, d_m) -> np.ndarray:
        loss_db = PATHLOSS_MODELS[self.pathloss_model](d_m, self.carrier_freq)
        return 10.0 ** (-np.asarray(loss_db) / 10.0)


def _check_dims(R, K):
    if not (isinstance(R, (int, np.integer)) and isinstance(K, (int, np.integer))):
        raise DimensionError(f"R and K must be integers, got {R!r}, {K!r}")
    if K < 1 or R < K:
        raise DimensionError(f"need R >= K >= 1, got R={R}, K={K}")


def gen_ssfc(R: int, K: int, sigma_g: float, rng: np.random.Generator) -> ComplexChannel:
    """Draw an R x K Rayleigh matrix with variance ``sigma_g**2`` per real dimension.

    The returned channel carries unit large-scale gains; attach real ones with
    :meth:`ComplexChannel.with_lsfc`.
    """
    _check_dims(R, K)
    if not sigma_g > 0:
        raise ParameterError(f"sigma_g must be positive, got {sigma_g}")
    re = rng.standard_normal((R, K))
    im = rng.standard_normal((R, K))
    G = sigma_g * (re + 1j * im)
    return ComplexChannel(G, np.ones(K))


def gen_lsfc_cell(K: int, scenario: CellScenario, rng: np.random.Generator):
    """Drop K users uniformly over the annulus [min_distance, radius].

    Placement is uniform in area, so the radius density grows linearly with r.

    Returns
    -------
    lam : (K,) linear path gains
    positions : (K, 2) user coordinates in meters, BS at the origin
    """
    if K < 1:
        raise DimensionError(f"K must be >= 1, got {K}")
    r2 = rng.uniform(scenario.min_distance**2, scenario.radius**2, size=K)
    r = np.sqrt(r2)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=K)
    positions = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
    return scenario.path_gain(r), positions


def realify(c: ComplexChannel) -> RealChannel:
    Gt = c.G_tilde
    G = np.block([[Gt.real, -Gt.imag], [Gt.imag, Gt.real]])
    Lambda = np.diag(np.tile(np.sqrt(c.lam), 2))
    return RealChannel(G=G, Lambda=Lambda, H=G @ Lambda, lam=c.lam.copy())


def realify_vector(v) -> np.ndarray:
    """Stack real over imaginary parts along the first axis."""
    v = np.asarray(v)
    return np.concatenate([v.real, v.imag], axis=0).astype(float)


def complexify_vector(x) -> np.ndarray:
    """Inverse of :func:`realify_vector`."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] % 2:
        raise DimensionError(f"length {x.shape[0]} is not even")
    n = x.shape[0] // 2
    return x[:n] + 1j * x[n:]
