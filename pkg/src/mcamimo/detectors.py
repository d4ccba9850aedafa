"""Digital ZF and MMSE reference detectors in the real-valued model.

Both the direct forms on ``H`` and the factored forms on ``H = G @ Lambda``
are provided; the factored forms are what the amplifier-enhanced circuit
evaluates, with ``Lambda^-1`` applied by the amplifier bank.

All solves go through a Cholesky factorization of the (regularized) Gram
matrix, guarded by a condition-number check.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import DimensionError, ParameterError, SingularityError

COND_LIMIT = 1e12


class DetectorKind(str, Enum):
    ZF = "ZF"
    MMSE = "MMSE"


@dataclass(frozen=True)
class LinearDetectorSpec:
    kind: DetectorKind
    rho: float = 0.0
    factored: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", DetectorKind(self.kind))
        if self.rho < 0:
            raise ParameterError("rho must be >= 0")
        if self.kind is DetectorKind.ZF and self.rho != 0:
            raise ParameterError("ZF detector takes rho == 0")


def _diag_of(Lambda) -> np.ndarray:
    L = np.asarray(Lambda, dtype=float)
    return np.diag(L).copy() if L.ndim == 2 else L


def _spd_solve(A, b):
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularityError(f"Gram matrix condition number {cond:.3g} exceeds {COND_LIMIT:.0e}")
    try:
        return cho_solve(cho_factor(A), b)
    except LinAlgError as exc:
        raise SingularityError(str(exc)) from exc


def _check(H, y):
    H = np.asarray(H, dtype=float)
    y = np.asarray(y, dtype=float)
    if H.ndim != 2 or y.shape[0] != H.shape[0]:
        raise DimensionError(f"incompatible shapes H{H.shape}, y{y.shape}")
    if H.shape[0] < H.shape[1]:
        raise DimensionError(f"H must be tall, got {H.shape}")
    return H, y


def regularizer_matrix(lam, rho: float) -> np.ndarray:
    """P = diag(rho / lambda_k), repeated for the real and imaginary halves."""
    lam = np.asarray(lam, dtype=float)
    return np.diag(np.tile(rho / lam, 2))


def zf_detect(H, y) -> np.ndarray:
    """(H^T H)^-1 H^T y. ``y`` may hold one trial per column."""
    H, y = _check(H, y)
    return _spd_solve(H.T @ H, H.T @ y)


def mmse_detect(H, y, rho: float) -> np.ndarray:
    """(H^T H + rho I)^-1 H^T y."""
    if rho < 0:
        raise ParameterError(f"rho must be >= 0, got {rho}")
    H, y = _check(H, y)
    return _spd_solve(H.T @ H + rho * np.eye(H.shape[1]), H.T @ y)


def zf_detect_factored(G, Lambda, y) -> np.ndarray:
    """Lambda^-1 (G^T G)^-1 G^T y."""
    G, y = _check(G, y)
    d = _diag_of(Lambda)
    core = _spd_solve(G.T @ G, G.T @ y)
    return core / (d[:, None] if core.ndim == 2 else d)


def mmse_detect_factored(G, Lambda, y, rho: float) -> np.ndarray:
    """Lambda^-1 (G^T G + P)^-1 G^T y with P = rho * Lambda^-2."""
    if rho < 0:
        raise ParameterError(f"rho must be >= 0, got {rho}")
    G, y = _check(G, y)
    d = _diag_of(Lambda)
    P = np.diag(rho / d**2)
    core = _spd_solve(G.T @ G + P, G.T @ y)
    return core / (d[:, None] if core.ndim == 2 else d)


def detect(spec: LinearDetectorSpec, y, *, H=None, G=None, Lambda=None) -> np.ndarray:
    if spec.factored:
        if G is None or Lambda is None:
            raise ParameterError("factored detection needs G and Lambda")
        if spec.kind is DetectorKind.ZF:
            return zf_detect_factored(G, Lambda, y)
        return mmse_detect_factored(G, Lambda, y, spec.rho)
    if H is None:
        raise ParameterError("unfactored detection needs H")
    if spec.kind is DetectorKind.ZF:
        return zf_detect(H, y)
    return mmse_detect(H, y, spec.rho)
