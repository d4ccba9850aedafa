"""Power, equivalent-FLOP and energy-efficiency accounting.

Power is static: OA quiescent power, converter power, and optionally the
ohmic dissipation of every programmed device at the solved node voltages.
The FLOP count is that of the digital ZF/MMSE computation the circuit
replaces, with one real multiply or one real add counting as one FLOP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import CircuitInstance, CircuitSolution, Topology
from .errors import ParameterError


@dataclass(frozen=True)
class PowerModel:
    """Static power constants in watts.

    ``n_dac`` / ``n_adc`` default to one DAC per received real input (2R) and
    one ADC per real output (2K). The converter powers are placeholders of a
    plausible order of magnitude; ratio metrics are insensitive to them.
    """

    p_oa: float = 12e-6
    p_dac: float = 1e-3
    p_adc: float = 2e-3
    n_dac: int | None = None
    n_adc: int | None = None
    include_crossbar_dissipation: bool = False

    def __post_init__(self):
        for name in ("p_oa", "p_dac", "p_adc"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")

    def scaled_converters(self, factor: float) -> "PowerModel":
        return PowerModel(self.p_oa, self.p_dac * factor, self.p_adc * factor,
                          self.n_dac, self.n_adc, self.include_crossbar_dissipation)


@dataclass(frozen=True)
class GpuBaseline:
    """Digital reference platform; defaults approximate a workstation GPU."""

    tflops: float = 14.8
    watts: float = 250.0

    @property
    def tops_per_watt(self) -> float:
        return self.tflops / self.watts


@dataclass(frozen=True)
class ComputeMetrics:
    flops: float
    time_s: float
    power_w: float
    tops: float
    tops_per_watt: float

    def ee_ratio(self, gpu: GpuBaseline = GpuBaseline()) -> float:
        return self.tops_per_watt / gpu.tops_per_watt


DEFAULT_COMPUTE_TIME = 80e-9


def oa_count(R: int, K: int, kind) -> int:
    """2R first-bank OAs + 2K second-bank OAs, plus 2K amplifiers when proposed."""
    kind = Topology(kind)
    n = 2 * R + 2 * K
    return n + 2 * K if kind is Topology.PROPOSED else n


def _dissipation(g, dv) -> float:
    return float(np.sum(np.asarray(g) * np.asarray(dv) ** 2))


def crossbar_dissipation(c: CircuitInstance, sol: CircuitSolution) -> float:
    """Sum of g * dV^2 over all devices, summing nodes at virtual ground.

    B and D columns are driven by inverted copies of the signal, so every
    crossbar device sees the full driving voltage. ``sol`` must hold a single
    solution vector.
    """
    v1, v2 = sol.v1, sol.v2
    if v1.ndim != 1:
        raise ParameterError("crossbar_dissipation expects a single solution vector")
    p = _dissipation(c.A + c.B, v2[None, :])
    p += _dissipation(c.delta0, v1)
    p += _dissipation(c.C + c.D, v1[:, None])
    if c.delta_fb is not None:
        p += _dissipation(c.delta_fb, v2)
    p += amplifier_dissipation(c, sol)
    return p


def amplifier_dissipation(c: CircuitInstance, sol: CircuitSolution) -> float:
    if c.kind is not Topology.PROPOSED:
        return 0.0
    return _dissipation(c.theta0, sol.v2) + _dissipation(c.theta, sol.vout)


def total_power_for(R: int, K: int, kind, pm: PowerModel = PowerModel(),
                    device_w: float = 0.0) -> float:
    n_dac = 2 * R if pm.n_dac is None else pm.n_dac
    n_adc = 2 * K if pm.n_adc is None else pm.n_adc
    p = oa_count(R, K, kind) * pm.p_oa + n_dac * pm.p_dac + n_adc * pm.p_adc
    if pm.include_crossbar_dissipation:
        p += device_w
    return p


def total_power(c: CircuitInstance, sol: CircuitSolution | None, pm: PowerModel = PowerModel()) -> float:
    device_w = 0.0
    if pm.include_crossbar_dissipation:
        if sol is None:
            raise ParameterError("crossbar dissipation needs a solved circuit")
        device_w = crossbar_dissipation(c, sol)
    return total_power_for(c.R, c.K, c.kind, pm, device_w)


def rapc(p_proposed: float, p_conventional: float) -> float:
    """Relative additional power of the proposed circuit."""
    if not p_conventional > 0:
        raise ParameterError("conventional power must be positive")
    return (p_proposed - p_conventional) / p_conventional


def equivalent_flops(R: int, K: int, kind: str = "MMSE") -> int:
    """FLOPs of the digital detector on the real-valued model (m = 2R, n = 2K).

    Gram matrix, symmetric half:      n (n + 1) / 2 * (2m - 1)
    SPD inverse:                      n^3
    matched filter H^T y:             n (2m - 1)
    inverse times matched filter:     n (2n - 1)
    MMSE diagonal loading:            n
    """
    kind = str(kind).upper()
    if kind not in ("ZF", "MMSE"):
        raise ParameterError(f"kind must be ZF or MMSE, got {kind!r}")
    if K < 1 or R < K:
        raise ParameterError(f"need R >= K >= 1, got R={R}, K={K}")
    m, n = 2 * R, 2 * K
    flops = n * (n + 1) // 2 * (2 * m - 1) + n**3 + n * (2 * m - 1) + n * (2 * n - 1)
    if kind == "MMSE":
        flops += n
    return flops


def compute_metrics(flops: float, time_s: float, power_w: float) -> ComputeMetrics:
    if not time_s > 0:
        raise ParameterError(f"computation time must be positive, got {time_s}")
    if not power_w > 0:
        raise ParameterError(f"power must be positive, got {power_w}")
    tops = flops / time_s / 1e12
    return ComputeMetrics(flops=flops, time_s=time_s, power_w=power_w,
                          tops=tops, tops_per_watt=tops / power_w)
