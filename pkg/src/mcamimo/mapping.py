"""Differential conductance mapping, scaling-factor rules and device errors.

A signed matrix ``U`` is stored as the difference of two positive conductance
matrices, ``X - Z = alpha * U``. ``X`` sits at one end of the device range
depending on the sign of ``u``; ``Z`` absorbs the value and is clipped to the
range when it falls outside.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateInputError, ParameterError


@dataclass(frozen=True)
class ConductanceRange:
    """Programmable conductance window in siemens."""

    w_min: float = 0.1e-6
    w_max: float = 30e-6

    def __post_init__(self):
        if not (0 < self.w_min < self.w_max):
            raise ParameterError(f"need 0 < w_min < w_max, got [{self.w_min}, {self.w_max}]")

    @property
    def w(self) -> float:
        return self.w_max - self.w_min

    def contains(self, g) -> np.ndarray:
        g = np.asarray(g)
        return (g >= self.w_min) & (g <= self.w_max)


DEFAULT_RANGE = ConductanceRange()


@dataclass(frozen=True)
class MappedMatrix:
    X: np.ndarray
    Z: np.ndarray
    alpha: float
    clip_count: int
    clip_mask: np.ndarray

    @property
    def shape(self):
        return self.X.shape

    @property
    def size(self) -> int:
        return self.X.size


@dataclass(frozen=True)
class ErrorModel:
    """Gaussian conductance error, std ``sigma_m`` siemens on every device.

    ``reclip`` forces perturbed values back into the device range; it is off
    by default so the error stays exactly Gaussian.
    """

    sigma_m: float = 0.0
    perturb_feedback: bool = True
    perturb_amplifier: bool = True
    reclip: bool = False

    def __post_init__(self):
        if not self.sigma_m >= 0:
            raise ParameterError(f"sigma_m must be >= 0, got {self.sigma_m}")

    @classmethod
    def from_fraction(cls, frac: float, crange: ConductanceRange = DEFAULT_RANGE, **kw):
        """``sigma_m`` given as a fraction of the range width ``w``."""
        return cls(sigma_m=frac * crange.w, **kw)


def map_matrix(U, alpha: float, crange: ConductanceRange = DEFAULT_RANGE) -> MappedMatrix:
    if not alpha > 0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    U = np.asarray(U, dtype=float)
    X = np.where(U > 0, crange.w_max, crange.w_min)
    Z = X - alpha * U
    # rounding can push the ICB extreme an ulp past an endpoint; that is not a clip
    tol = 1e-12 * crange.w_max
    mask = (Z < crange.w_min - tol) | (Z > crange.w_max + tol)
    Z = np.clip(Z, crange.w_min, crange.w_max)
    return MappedMatrix(X=X, Z=Z, alpha=float(alpha), clip_count=int(mask.sum()), clip_mask=mask)


def unmap(m: MappedMatrix) -> np.ndarray:
    return (m.X - m.Z) / m.alpha


def scb_alpha(sigma_u: float, beta: float, crange: ConductanceRange = DEFAULT_RANGE) -> float:
    """Statistical-CSI scaling factor, alpha = w / (beta * sigma_u)."""
    if not sigma_u > 0:
        raise ParameterError(f"sigma_u must be positive, got {sigma_u}")
    if not beta > 0:
        raise ParameterError(f"beta must be positive, got {beta}")
    return crange.w / (beta * sigma_u)


def sigma_u_for_G(sigma_g: float) -> float:
    if not sigma_g > 0:
        raise ParameterError(f"sigma_g must be positive, got {sigma_g}")
    return float(sigma_g)


def sigma_u_for_H(lam, sigma_g: float) -> float:
    """Element std of H averaged over columns: sqrt(mean(lambda)) * sigma_g."""
    lam = np.asarray(lam, dtype=float)
    if lam.size == 0 or np.any(lam <= 0):
        raise ParameterError("lambda must be a non-empty vector of positive gains")
    return float(np.sqrt(lam.mean()) * sigma_u_for_G(sigma_g))


def icb_alpha(U, crange: ConductanceRange = DEFAULT_RANGE) -> float:
    """Instantaneous-CSI scaling factor, alpha = w / max|u|; never clips."""
    peak = float(np.max(np.abs(U))) if np.size(U) else 0.0
    if peak == 0:
        raise DegenerateInputError("cannot derive a scaling factor from an all-zero matrix")
    return crange.w / peak


def perturb_values(g, err: ErrorModel, rng: np.random.Generator, enabled: bool = True,
                   crange: ConductanceRange = DEFAULT_RANGE) -> np.ndarray:
    """Add N(0, sigma_m^2) to each device.

    Noise is drawn even when ``enabled`` is false so the stream position does
    not depend on the toggles.
    """
    g = np.asarray(g, dtype=float)
    noise = rng.standard_normal(g.shape)
    if not enabled or err.sigma_m == 0:
        return g.copy()
    out = g + err.sigma_m * noise
    if err.reclip:
        out = np.clip(out, crange.w_min, crange.w_max)
    return out


def perturb(m: MappedMatrix, err: ErrorModel, rng: np.random.Generator,
            crange: ConductanceRange = DEFAULT_RANGE) -> MappedMatrix:
    """Independent Gaussian error on every device of both X and Z."""
    X = perturb_values(m.X, err, rng, crange=crange)
    Z = perturb_values(m.Z, err, rng, crange=crange)
    return replace(m, X=X, Z=Z)
