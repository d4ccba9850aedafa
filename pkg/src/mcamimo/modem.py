"""Square-QAM mapping, hard slicing, AWGN and bit-error counting.

Symbols live in the real-valued model: a length-K complex vector ``s~`` is
carried as ``[Re s~; Im s~]`` of length 2K. Per complex symbol the first half
of its bits selects the in-phase level and the second half the quadrature
level, each through a binary-reflected Gray code on the PAM level index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError


def _gray(i):
    return i ^ (i >> 1)


def _bits_to_int(bits):
    """MSB-first bit groups along the last axis -> integers."""
    n = bits.shape[-1]
    weights = 1 << np.arange(n - 1, -1, -1)
    return (bits.astype(np.int64) * weights).sum(axis=-1)


def _int_to_bits(vals, n):
    shifts = np.arange(n - 1, -1, -1)
    return ((np.asarray(vals)[..., None] >> shifts) & 1).astype(np.uint8)


@dataclass(frozen=True)
class ModulationSpec:
    order: int
    bits_per_symbol: int
    gray_map: np.ndarray  # complex points, indexed by the integer value of the bits
    p_s: float
    levels: np.ndarray  # ascending PAM levels per real dimension
    gray_of_level: np.ndarray  # level index -> bit pattern (per dimension)
    level_of_gray: np.ndarray  # bit pattern -> level index

    @property
    def bits_per_dim(self) -> int:
        return self.bits_per_symbol // 2

    @property
    def min_distance(self) -> float:
        return float(self.levels[1] - self.levels[0])

    @classmethod
    def qam(cls, order: int = 64, p_s: float = 1.0) -> "ModulationSpec":
        """Gray-mapped square QAM normalized to average energy ``p_s``."""
        m = int(round(math.sqrt(order)))
        if m * m != order or m < 2 or (m & (m - 1)):
            raise ParameterError(f"order must be an even power of two, got {order}")
        if p_s <= 0:
            raise ParameterError("p_s must be positive")
        nb = int(math.log2(m))
        # E|s|^2 of the odd-integer lattice is 2 (m^2 - 1) / 3
        scale = math.sqrt(p_s * 3.0 / (2.0 * (order - 1)))
        levels = scale * np.arange(-(m - 1), m, 2, dtype=float)
        gray_of_level = np.array([_gray(i) for i in range(m)])
        level_of_gray = np.argsort(gray_of_level)
        codes = np.arange(order)
        i_idx = level_of_gray[codes >> nb]
        q_idx = level_of_gray[codes & (m - 1)]
        points = levels[i_idx] + 1j * levels[q_idx]
        return cls(
            order=order,
            bits_per_symbol=2 * nb,
            gray_map=points,
            p_s=p_s,
            levels=levels,
            gray_of_level=gray_of_level,
            level_of_gray=level_of_gray,
        )


QAM64 = ModulationSpec.qam(64)


@dataclass(frozen=True)
class NoiseSpec:
    """Complex AWGN with variance ``sigma_n_sq`` per element."""

    sigma_n_sq: float

    def __post_init__(self):
        if not self.sigma_n_sq >= 0:
            raise ParameterError(f"noise variance must be >= 0, got {self.sigma_n_sq}")

    @property
    def per_real_dim(self) -> float:
        return self.sigma_n_sq / 2.0


def modulate(bits, spec: ModulationSpec = QAM64) -> np.ndarray:
    """Map bits (last axis) to complex symbols.

    ``bits`` of shape ``(..., n * bits_per_symbol)`` gives ``(..., n)`` symbols.
    """
    bits = np.asarray(bits)
    nb = spec.bits_per_symbol
    if bits.shape[-1] % nb:
        raise DimensionError(f"bit length {bits.shape[-1]} is not a multiple of {nb}")
    groups = bits.reshape(*bits.shape[:-1], -1, nb)
    return spec.gray_map[_bits_to_int(groups)]


def slice_levels(x, spec: ModulationSpec = QAM64) -> np.ndarray:
    """Nearest PAM level index for each real value.

    Exact midpoints go to the smaller-magnitude level; the midpoint at zero goes
    to the lower (negative) level.
    """
    x = np.asarray(x, dtype=float)
    lv = spec.levels
    m = lv.size
    pos = np.clip(np.searchsorted(lv, x), 1, m - 1)
    lo, hi = pos - 1, pos
    d_lo = np.abs(x - lv[lo])
    d_hi = np.abs(lv[hi] - x)
    # midpoints computed in floating point may miss exact equality by an ulp
    tie = np.abs(d_hi - d_lo) <= 1e-12 * (lv[1] - lv[0])
    pick_hi = (d_hi < d_lo) & ~tie
    pick_hi = np.where(tie, np.abs(lv[hi]) < np.abs(lv[lo]), pick_hi)
    return np.where(pick_hi, hi, lo)


def demodulate(s_hat, spec: ModulationSpec = QAM64) -> np.ndarray:
    """Hard decisions on a real-valued estimate ``(..., 2K)`` -> bits ``(..., 6K)``."""
    s_hat = np.asarray(s_hat, dtype=float)
    if s_hat.shape[-1] % 2:
        raise DimensionError(f"real-valued symbol vector length {s_hat.shape[-1]} is odd")
    K = s_hat.shape[-1] // 2
    idx = slice_levels(s_hat, spec)
    pattern = spec.gray_of_level[idx]
    nd = spec.bits_per_dim
    i_bits = _int_to_bits(pattern[..., :K], nd)
    q_bits = _int_to_bits(pattern[..., K:], nd)
    bits = np.concatenate([i_bits, q_bits], axis=-1)  # (..., K, nb)
    return bits.reshape(*s_hat.shape[:-1], K * spec.bits_per_symbol)


def awgn(n, noise: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """Real-valued noise, i.i.d. N(0, sigma_n^2 / 2). ``n`` may be a shape."""
    if noise.sigma_n_sq == 0:
        return np.zeros(n)
    return rng.normal(0.0, math.sqrt(noise.per_real_dim), size=n)


def snr_to_noise_var(snr_db: float, p_s: float = 1.0, gain: float = 1.0) -> NoiseSpec:
    """Noise variance for a per-receive-antenna SNR of ``p_s * gain / sigma_n^2``.

    ``gain`` is the mean per-antenna channel power gain of one transmitted
    symbol; see :func:`mean_channel_gain`. ``snr_db = inf`` turns noise off.
    """
    if not gain > 0:
        raise ParameterError(f"gain must be positive, got {gain}")
    if np.isposinf(snr_db):
        return NoiseSpec(0.0)
    return NoiseSpec(p_s * gain / 10.0 ** (snr_db / 10.0))


def mean_channel_gain(lam, sigma_g: float) -> float:
    """(1/K) sum_k lambda_k * 2 sigma_g^2."""
    return float(np.mean(lam)) * 2.0 * sigma_g**2


SNR_CONVENTIONS = ("array_ebn0", "per_antenna")


def noise_for_snr(snr_db: float, *, lam, sigma_g: float, R: int,
                  spec: ModulationSpec = QAM64, convention: str = "array_ebn0") -> NoiseSpec:
    """Noise variance for an SNR axis value under a named convention.

    ``per_antenna``: SNR = p_s * gain / sigma_n^2, the symbol SNR at one
    receive antenna.
    ``array_ebn0``: SNR = R * p_s * gain / (bits_per_symbol * sigma_n^2), the
    energy per bit collected over all R antennas relative to N0. With R >> K
    this tracks the single-link Eb/N0 of the detector output.
    """
    gain = mean_channel_gain(lam, sigma_g)
    if convention == "per_antenna":
        return snr_to_noise_var(snr_db, spec.p_s, gain)
    if convention == "array_ebn0":
        return snr_to_noise_var(snr_db, spec.p_s, gain * R / spec.bits_per_symbol)
    raise ParameterError(f"unknown SNR convention {convention!r}; choose from {SNR_CONVENTIONS}")


def count_bit_errors(tx_bits, rx_bits) -> int:
    tx = np.asarray(tx_bits)
    rx = np.asarray(rx_bits)
    if tx.shape != rx.shape:
        raise DimensionError(f"bit arrays differ in shape: {tx.shape} vs {rx.shape}")
    return int(np.count_nonzero(tx != rx))


def random_bits(shape, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 2, size=shape, dtype=np.uint8)
