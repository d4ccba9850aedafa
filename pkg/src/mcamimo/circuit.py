"""Crossbar detector circuits: construction, steady state and transient response.

Both topologies share the crossbar computing module. Four crossbars realize the
signed matrices ``E = A - B`` and ``F = C - D``; a first OA bank (2R inverting
transimpedance stages, feedback ``delta0``) and a second bank (2K stages,
feedback ``delta_k``) enforce, at virtual ground,

    E v2 + i_in + delta0 * v1 = 0
    F^T v1 - Delta1 v2 = 0

so that ``v2 = -(F^T E + Delta)^-1 F^T i_in`` with ``Delta = diag(delta0 * delta_k)``.
The proposed circuit maps the small-scale fading matrix ``G`` into the crossbars
and follows the second bank with 2K inverting amplifiers of gain
``theta0 / theta_k`` proportional to ``1 / sqrt(lambda_k)``. The conventional
circuit maps ``H`` directly and reads ``v2``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .channel import DEFAULT_SIGMA_G
from .detectors import COND_LIMIT
from .errors import ConvergenceError, DimensionError, ParameterError, RealizabilityError, SingularityError
from .mapping import (
    DEFAULT_RANGE,
    ConductanceRange,
    ErrorModel,
    icb_alpha,
    map_matrix,
    perturb,
    perturb_values,
    scb_alpha,
    sigma_u_for_G,
    sigma_u_for_H,
)

DEFAULT_INPUT_GAIN = 1e-6  # A per unit of y


class Topology(str, Enum):
    PROPOSED = "proposed"
    CONVENTIONAL = "conventional"


@dataclass(frozen=True)
class MappingScheme:
    """``SCB`` with scaling parameter ``beta``, or ``ICB`` (no parameter)."""

    kind: str
    beta: float | None = None

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        if kind == "SCB":
            if self.beta is None or not self.beta > 0:
                raise ParameterError(f"SCB needs beta > 0, got {self.beta}")
        elif kind == "ICB":
            object.__setattr__(self, "beta", None)
        else:
            raise ParameterError(f"unknown mapping scheme {self.kind!r}")

    @classmethod
    def scb(cls, beta: float) -> "MappingScheme":
        return cls("SCB", beta)

    @classmethod
    def icb(cls) -> "MappingScheme":
        return cls("ICB")

    def alpha(self, U, sigma_u: float | None, crange: ConductanceRange) -> float:
        if self.kind == "ICB":
            return icb_alpha(U, crange)
        return scb_alpha(sigma_u, self.beta, crange)


@dataclass(frozen=True)
class CircuitInstance:
    """Programmed (and possibly perturbed) conductance state of one detector.

    ``delta0`` holds the 2R first-bank feedback devices and ``theta0`` the 2K
    amplifier input devices; they share one nominal value each but are
    separate physical devices. ``delta_fb is None`` marks the ZF configuration
    where the Delta branch is left out.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    delta0: np.ndarray
    delta_fb: np.ndarray | None
    theta0: np.ndarray | None
    theta: np.ndarray | None
    kind: Topology
    input_gain: float
    output_scale: float
    alpha: float
    clip_count: int
    n_mapped: int
    clamped: tuple = field(default=())

    @property
    def E(self) -> np.ndarray:
        return self.A - self.B

    @property
    def F(self) -> np.ndarray:
        return self.C - self.D

    @property
    def R(self) -> int:
        return self.A.shape[0] // 2

    @property
    def K(self) -> int:
        return self.A.shape[1] // 2

    @property
    def clip_fraction(self) -> float:
        return self.clip_count / self.n_mapped

    @property
    def Delta(self) -> np.ndarray:
        """diag(delta0 * delta_k) using the mean first-bank feedback conductance."""
        if self.delta_fb is None:
            return np.zeros((2 * self.K, 2 * self.K))
        return np.diag(np.mean(self.delta0) * self.delta_fb)

    @property
    def gain_ratios(self) -> np.ndarray | None:
        """theta_k / theta0 for each amplifier (the diagonal of Theta)."""
        if self.theta is None:
            return None
        return self.theta / self.theta0


@dataclass(frozen=True)
class CircuitSolution:
    i_in: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    vout: np.ndarray | None
    s_hat: np.ndarray


def _split_product(target, crange: ConductanceRange, policy: str):
    """Realize delta0 * delta_k = target_k with every device inside the range.

    delta0 defaults to w_max. If that leaves some delta_k out of range,
    ``policy='strict'`` moves delta0 to the largest value that makes all of
    them realizable (raising if none does), while ``policy='clamp'`` keeps
    delta0 = w_max and clips the offending delta_k to the range.
    """
    w_min, w_max = crange.w_min, crange.w_max
    target = np.asarray(target, dtype=float)
    if np.any(target <= 0):
        raise ParameterError("regularizer entries must be positive for an MMSE circuit")
    d0 = w_max
    dk = target / d0
    if np.all(crange.contains(dk)):
        return d0, dk, ()
    if policy == "strict":
        lo = max(w_min, target.max() / w_max)
        hi = min(w_max, target.min() / w_min)
        if lo <= hi:
            return hi, target / hi, ()
        k = int(np.argmin(target)) if target.min() / w_min < lo else int(np.argmax(target))
        raise RealizabilityError(
            f"delta_fb[{k}]: product delta0*delta_k = {target[k]:.3g} S^2 cannot be realized "
            f"together with the other entries in [{w_min:.3g}, {w_max:.3g}] S",
            device=f"delta_fb[{k}]",
        )
    # a small delta0 would make its absolute device error large in relative terms,
    # so keep delta0 = w_max and clip delta_k instead
    raw = target / d0
    dk = np.clip(raw, w_min, w_max)
    clamped = tuple(f"delta_fb[{k}]" for k in np.flatnonzero(raw != dk))
    return d0, dk, clamped


def _check_policy(policy):
    if policy not in ("strict", "clamp"):
        raise ParameterError(f"realizability policy must be 'strict' or 'clamp', got {policy!r}")


def _program_module(U, alpha, target_delta, crange, err, rng, policy):
    """Map U into both crossbar pairs and realize the feedback devices."""
    mE = map_matrix(U, alpha, crange)
    mF = map_matrix(U, alpha, crange)
    clamped = ()
    if target_delta is None:
        d0, dk = crange.w_max, None
    else:
        d0, dk, clamped = _split_product(target_delta, crange, policy)
    mE = perturb(mE, err, rng, crange)
    mF = perturb(mF, err, rng, crange)
    n_rows = U.shape[0]
    delta0 = perturb_values(np.full(n_rows, d0), err, rng, err.perturb_feedback, crange)
    delta_fb = None
    if dk is not None:
        delta_fb = perturb_values(dk, err, rng, err.perturb_feedback, crange)
    return mE, mF, delta0, delta_fb, clamped


def _diag_vector(M, n) -> np.ndarray | None:
    if M is None:
        return None
    M = np.asarray(M, dtype=float)
    v = np.diag(M).copy() if M.ndim == 2 else M.copy()
    if v.shape == ():
        v = np.full(n, float(v))
    if v.shape != (n,):
        raise DimensionError(f"expected {n} diagonal entries, got {v.shape}")
    return v


def build_proposed(G, Lambda, P=None, scheme: MappingScheme = MappingScheme.icb(),
                   crange: ConductanceRange = DEFAULT_RANGE, err: ErrorModel = ErrorModel(),
                   rng: np.random.Generator | None = None, *, sigma_g: float = DEFAULT_SIGMA_G,
                   input_gain: float = DEFAULT_INPUT_GAIN, policy: str = "strict") -> CircuitInstance:
    """Program the amplifier-enhanced detector for ``G`` and ``Lambda``.

    ``P`` is the MMSE regularizer (matrix or diagonal); ``None`` builds the ZF
    circuit. With ``policy='clamp'`` unrealizable feedback or amplifier devices
    are clamped to the range and listed in ``clamped`` instead of raising.
    """
    _check_policy(policy)
    G = np.asarray(G, dtype=float)
    n = G.shape[1]
    lam_sqrt = _diag_vector(Lambda, n)
    if np.any(lam_sqrt <= 0):
        raise ParameterError("Lambda entries must be positive")
    if not input_gain > 0:
        raise ParameterError("input_gain must be positive")
    if rng is None:
        rng = np.random.default_rng(0)
    alpha = scheme.alpha(G, sigma_u_for_G(sigma_g) if scheme.kind == "SCB" else None, crange)
    p = _diag_vector(P, n)
    target = None if p is None else alpha**2 * p

    # Theta = kappa * Lambda, kappa puts the largest theta_k at w_max; theta0 = w_max
    kappa = 1.0 / lam_sqrt.max()
    theta_nom = crange.w_max * kappa * lam_sqrt
    clamped_theta = ()
    low = theta_nom < crange.w_min
    if np.any(low):
        k = int(np.argmin(theta_nom))
        if policy == "strict":
            raise RealizabilityError(
                f"theta[{k}] = {theta_nom[k]:.3g} S is below w_min = {crange.w_min:.3g} S "
                f"(large-scale gain spread too wide for the device range)",
                device=f"theta[{k}]",
            )
        clamped_theta = tuple(f"theta[{j}]" for j in np.flatnonzero(low))
        theta_nom = np.maximum(theta_nom, crange.w_min)

    mE, mF, delta0, delta_fb, clamped = _program_module(G, alpha, target, crange, err, rng, policy)
    theta0 = perturb_values(np.full(n, crange.w_max), err, rng, err.perturb_amplifier, crange)
    theta = perturb_values(theta_nom, err, rng, err.perturb_amplifier, crange)
    return CircuitInstance(
        A=mE.X, B=mE.Z, C=mF.X, D=mF.Z,
        delta0=delta0, delta_fb=delta_fb, theta0=theta0, theta=theta,
        kind=Topology.PROPOSED,
        input_gain=float(input_gain),
        output_scale=alpha * kappa / input_gain,
        alpha=alpha,
        clip_count=mE.clip_count + mF.clip_count,
        n_mapped=mE.size + mF.size,
        clamped=clamped + clamped_theta,
    )


def build_conventional(H, rho=None, scheme: MappingScheme = MappingScheme.icb(),
                       crange: ConductanceRange = DEFAULT_RANGE, err: ErrorModel = ErrorModel(),
                       rng: np.random.Generator | None = None, *, lam=None,
                       sigma_g: float = DEFAULT_SIGMA_G, input_gain: float = DEFAULT_INPUT_GAIN,
                       policy: str = "strict") -> CircuitInstance:
    """Program the conventional detector, which maps ``H`` as a whole.

    SCB needs the large-scale gains ``lam`` to set the element std of ``H``.
    ``rho=None`` builds the ZF circuit, otherwise Delta = alpha^2 rho I.
    """
    _check_policy(policy)
    H = np.asarray(H, dtype=float)
    n = H.shape[1]
    if not input_gain > 0:
        raise ParameterError("input_gain must be positive")
    if rng is None:
        rng = np.random.default_rng(0)
    sigma_u = None
    if scheme.kind == "SCB":
        if lam is None:
            raise ParameterError("SCB mapping of H needs the large-scale gains lam")
        sigma_u = sigma_u_for_H(lam, sigma_g)
    alpha = scheme.alpha(H, sigma_u, crange)
    target = None if rho is None else np.full(n, alpha**2 * float(rho))
    mE, mF, delta0, delta_fb, clamped = _program_module(H, alpha, target, crange, err, rng, policy)
    return CircuitInstance(
        A=mE.X, B=mE.Z, C=mF.X, D=mF.Z,
        delta0=delta0, delta_fb=delta_fb, theta0=None, theta=None,
        kind=Topology.CONVENTIONAL,
        input_gain=float(input_gain),
        output_scale=alpha / input_gain,
        alpha=alpha,
        clip_count=mE.clip_count + mF.clip_count,
        n_mapped=mE.size + mF.size,
        clamped=clamped,
    )


def _system(c: CircuitInstance):
    """Reduced second-bank system M v2 = -rhs_op @ i_in."""
    E, F = c.E, c.F
    inv_d0 = 1.0 / c.delta0
    M = F.T @ (inv_d0[:, None] * E)
    if c.delta_fb is not None:
        M = M + np.diag(c.delta_fb)
    return M, F.T * inv_d0[None, :]


def solve_algebraic(c: CircuitInstance, y) -> CircuitSolution:
    """Ideal-OA steady state for received vector(s) ``y`` (one per column)."""
    y = np.asarray(y, dtype=float)
    if y.shape[0] != c.A.shape[0]:
        raise DimensionError(f"y has {y.shape[0]} rows, circuit expects {c.A.shape[0]}")
    i_in = c.input_gain * y
    M, Ft_w = _system(c)
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularityError(f"circuit system condition number {cond:.3g} exceeds {COND_LIMIT:.0e}")
    v2 = -np.linalg.solve(M, Ft_w @ i_in)
    d0 = c.delta0[:, None] if y.ndim == 2 else c.delta0
    v1 = -(c.E @ v2 + i_in) / d0
    vout = None
    if c.kind is Topology.PROPOSED:
        g = (c.theta0 / c.theta)
        vout = -(g[:, None] if y.ndim == 2 else g) * v2
    s_hat = rescale_output(c, vout if vout is not None else v2)
    return CircuitSolution(i_in=i_in, v1=v1, v2=v2, vout=vout, s_hat=s_hat)


def rescale_output(c: CircuitInstance, v) -> np.ndarray:
    """Convert the measured output voltages to symbol units."""
    sign = 1.0 if c.kind is Topology.PROPOSED else -1.0
    return sign * c.output_scale * np.asarray(v)


def kcl_residuals(c: CircuitInstance, sol: CircuitSolution):
    """Residuals of the two node equations and a scale for each.

    Each scale is the largest sum of absolute current terms at a node, so the
    ratio stays meaningful when the terms cancel (as in the ZF second bank).
    """
    d0 = c.delta0[:, None] if sol.v1.ndim == 2 else c.delta0
    r1 = c.E @ sol.v2 + sol.i_in + d0 * sol.v1
    s1 = np.max(np.abs(c.E) @ np.abs(sol.v2) + np.abs(sol.i_in) + np.abs(d0 * sol.v1))
    if c.delta_fb is None:
        fb = np.zeros_like(sol.v2)
    else:
        fb = (c.delta_fb[:, None] if sol.v2.ndim == 2 else c.delta_fb) * sol.v2
    r2 = c.F.T @ sol.v1 - fb
    s2 = np.max(np.abs(c.F.T) @ np.abs(sol.v1) + np.abs(fb))
    return r1, s1, r2, s2


# Transient model


@dataclass(frozen=True)
class TransientSpec:
    """Single-pole OA model and integration window.

    Each OA has open-loop gain ``dc_gain / (1 + s / w_p)`` with unity-gain
    frequency ``gbp``. ``dt`` defaults to a twentieth of ``1 / (2 pi gbp)``.
    """

    gbp: float = 500e6
    dc_gain: float = 1e5
    t_end: float = 1e-6
    dt: float | None = None
    settle_tol: float = 1e-3

    def __post_init__(self):
        if not self.gbp > 0:
            raise ParameterError("gbp must be positive")
        if not self.dc_gain > 1:
            raise ParameterError("dc_gain must exceed 1")
        tau = 1.0 / (2 * math.pi * self.gbp)
        if self.dt is None:
            object.__setattr__(self, "dt", tau / 20.0)
        if not (0 < self.dt < tau / 10.0):
            raise ParameterError(f"dt must be below 1/(2 pi gbp)/10 = {tau / 10:.3g} s")
        if not self.t_end > self.dt:
            raise ParameterError("t_end must exceed dt")
        if not self.settle_tol > 0:
            raise ParameterError("settle_tol must be positive")

    @property
    def pole(self) -> float:
        """Open-loop pole in rad/s."""
        return 2 * math.pi * self.gbp / self.dc_gain


@dataclass(frozen=True)
class TransientResult:
    t: np.ndarray
    outputs: np.ndarray  # (nt, 2K) measured node: v_out (proposed) or v2 (conventional)
    v2: np.ndarray
    output_node: str
    settle_time: float
    final: np.ndarray
    equilibrium: np.ndarray

    def s_hat(self, c: CircuitInstance) -> np.ndarray:
        return rescale_output(c, self.final)


def _state_space(c: CircuitInstance, i_in, spec: TransientSpec):
    """dz/dt = M z + b for z = [v1, v2, vout]."""
    m, n = c.A.shape
    prop = c.kind is Topology.PROPOSED
    N = m + n + (n if prop else 0)
    E, F = c.E, c.F
    A0 = spec.dc_gain
    # summing-node voltages x = Nx @ z + nx0
    L1 = (c.A + c.B).sum(axis=1) + c.delta0
    L2 = (c.C + c.D).sum(axis=0)
    if c.delta_fb is not None:
        L2 = L2 + c.delta_fb
    Mx = np.zeros((N, N))
    b = np.zeros(N)
    s1, s2, s3 = slice(0, m), slice(m, m + n), slice(m + n, N)
    # first bank, inverting: dv1 = wp (-A0 x1 - v1)
    Mx[s1, s1] = -A0 * np.diag(c.delta0 / L1)
    Mx[s1, s2] = -A0 * E / L1[:, None]
    b[s1] = -A0 * i_in / L1
    # second bank, non-inverting: dv2 = wp (A0 x2 - v2)
    Mx[s2, s1] = A0 * F.T / L2[:, None]
    if c.delta_fb is not None:
        Mx[s2, s2] = -A0 * np.diag(c.delta_fb / L2)
    if prop:
        L3 = c.theta0 + c.theta
        Mx[s3, s2] = -A0 * np.diag(c.theta0 / L3)
        Mx[s3, s3] = -A0 * np.diag(c.theta / L3)
    Mx -= np.eye(N)
    wp = spec.pole
    return wp * Mx, wp * b, (s1, s2, s3 if prop else s2)


def transient_solve(c: CircuitInstance, y, spec: TransientSpec = TransientSpec()) -> TransientResult:
    """Step response from rest to input ``y`` applied at t = 0.

    Integrates the linear node equations with classical RK4 at the fixed step
    ``spec.dt``. Raises ConvergenceError if the outputs at ``t_end`` are not
    within ``settle_tol`` of the circuit's equilibrium.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise DimensionError("transient_solve takes a single received vector")
    i_in = c.input_gain * y
    M, b, (s1, s2, sout) = _state_space(c, i_in, spec)
    N = M.shape[0]
    h = spec.dt
    hM = h * M
    I = np.eye(N)
    hM2 = hM @ hM
    hM3 = hM2 @ hM
    Phi = I + hM + hM2 / 2 + hM3 / 6 + hM3 @ hM / 24
    psi = h * (I + hM / 2 + hM2 / 6 + hM3 / 24) @ b
    if np.max(np.abs(np.linalg.eigvals(Phi))) >= 1.0:
        raise ConvergenceError("integration step is unstable for this circuit; reduce dt")
    z_eq = np.linalg.solve(M, -b)

    nt = int(math.ceil(spec.t_end / h)) + 1
    n_out = sout.stop - sout.start
    outputs = np.empty((nt, n_out))
    v2_trace = np.empty((nt, s2.stop - s2.start))
    z = np.zeros(N)
    outputs[0] = z[sout]
    v2_trace[0] = z[s2]
    for k in range(1, nt):
        z = Phi @ z + psi
        outputs[k] = z[sout]
        v2_trace[k] = z[s2]
    t = np.arange(nt) * h

    final = outputs[-1].copy()
    eq_out = z_eq[sout]
    scale = np.max(np.abs(eq_out))
    if scale == 0:
        return TransientResult(t, outputs, v2_trace, _node_name(c), 0.0, final, eq_out)
    residual = np.max(np.abs(final - eq_out)) / scale
    if residual > spec.settle_tol:
        raise ConvergenceError(
            f"outputs not settled by t_end = {spec.t_end:.3g} s (relative residual {residual:.3g})",
            residual=residual,
        )
    band = spec.settle_tol * np.max(np.abs(final))
    dev = np.max(np.abs(outputs - final), axis=1)
    outside = np.flatnonzero(dev > band)
    settle = t[outside[-1] + 1] if outside.size else 0.0
    return TransientResult(t, outputs, v2_trace, _node_name(c), float(settle), final, eq_out)


def _node_name(c):
    return "vout" if c.kind is Topology.PROPOSED else "v2"


def follower_step(spec: TransientSpec = TransientSpec(), vin: float = 1.0):
    """Step response of one OA in unity feedback (voltage follower).

    Uses the same single-pole model and RK4 step as :func:`transient_solve`.
    Returns ``(t, v)``; the closed-loop time constant is about 1/(2 pi gbp).
    """
    wp, A0 = spec.pole, spec.dc_gain
    a = -wp * (A0 + 1.0)
    h = spec.dt
    ha = h * a
    phi = 1 + ha + ha**2 / 2 + ha**3 / 6 + ha**4 / 24
    psi = h * (1 + ha / 2 + ha**2 / 6 + ha**3 / 24) * wp * A0 * vin
    nt = int(math.ceil(spec.t_end / h)) + 1
    v = np.empty(nt)
    v[0] = 0.0
    for k in range(1, nt):
        v[k] = phi * v[k - 1] + psi
    return np.arange(nt) * h, v


def write_trace_csv(result: TransientResult, path, every: int = 1, include_v2: bool = False):
    """Long-format trace dump: time_s, node_name, voltage_V."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "node_name", "voltage_V"])
        for k in range(0, result.t.size, every):
            t = f"{result.t[k]:.6e}"
            for j, v in enumerate(result.outputs[k]):
                w.writerow([t, f"{result.output_node}[{j}]", f"{v:.9e}"])
            if include_v2 and result.output_node != "v2":
                for j, v in enumerate(result.v2[k]):
                    w.writerow([t, f"v2[{j}]", f"{v:.9e}"])
