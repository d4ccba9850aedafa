"""Experiment configuration: a flat ``key = value`` file in TOML syntax.

Example::

    R = 64
    K = 4
    snr_db = [10, 15, 20]
    beta = [1, 2, 3, 4]
    sigma_m_frac = [0.0, 0.01]
    scheme = ["SCB", "ICB"]
    detector = "MMSE"
    topology = "proposed"
    trials = 2000
    seed = 7

Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace

from ..channel import DEFAULT_SIGMA_G, PATHLOSS_MODELS, CellScenario
from ..errors import ParameterError
from ..modem import SNR_CONVENTIONS

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ParameterError):
    pass


_LIST_KEYS = ("snr_db", "beta", "sigma_m_frac", "scheme", "k_grid")


@dataclass
class ExperimentConfig:
    # system
    R: int = 64
    K: int = 4
    modulation: str = "64QAM"
    sigma_g: float = DEFAULT_SIGMA_G
    snr_convention: str = "array_ebn0"
    # sweep axes
    snr_db: list = field(default_factory=lambda: [15.0])
    beta: list = field(default_factory=lambda: [3.0])
    sigma_m_frac: list = field(default_factory=lambda: [0.0])
    scheme: list = field(default_factory=lambda: ["SCB"])
    detector: str = "MMSE"
    topology: str = "proposed"
    include_digital: bool = True
    # channel scenario
    scenario: str = "unit_lsfc"
    cell_radius: float = 150.0
    cell_carrier_freq: float = 2e9
    cell_bandwidth: float = 25e6
    cell_tx_power_dbm: float = 20.0
    cell_noise_figure_db: float = 9.0
    cell_min_distance: float = 10.0
    cell_pathloss_model: str = "macro-128.1-37.6"
    # devices
    w_min: float = 0.1e-6
    w_max: float = 30e-6
    perturb_feedback: bool = True
    perturb_amplifier: bool = True
    reclip: bool = False
    realizability: str = "clamp"
    # Monte-Carlo control
    trials: int = 2000
    min_errors: int = 200
    max_trials: int = 200_000
    channel_redraws: int = 10
    seed: int = 1
    workers: int = 1
    out_path: str | None = None
    # transient
    gbp: float = 500e6
    dc_gain: float = 1e5
    t_end: float = 1e-6
    settle_tol: float = 1e-3
    trace_every: int = 10
    # power / efficiency
    k_grid: list = field(default_factory=lambda: [2, 4, 8, 16])
    p_oa: float = 12e-6
    p_dac: float = 1e-3
    p_adc: float = 2e-3
    include_crossbar_dissipation: bool = False
    compute_time_s: float = 80e-9
    gpu_tflops: float = 14.8
    gpu_watts: float = 250.0

    def __post_init__(self):
        for key in _LIST_KEYS:
            val = getattr(self, key)
            if not isinstance(val, (list, tuple)):
                val = [val]
            setattr(self, key, list(val))
        self.scheme = [str(s).upper() for s in self.scheme]
        self.detector = str(self.detector).upper()
        self.validate()

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(isinstance(self.R, int) and isinstance(self.K, int), "R and K must be integers")
        need(self.R >= self.K >= 1, f"need R >= K >= 1, got R={self.R}, K={self.K}")
        need(self.modulation.upper() == "64QAM", "only 64QAM is supported")
        need(self.trials >= 1, "trials must be >= 1")
        need(self.max_trials >= self.trials, "max_trials must be >= trials")
        need(self.channel_redraws >= 1, "channel_redraws must be >= 1")
        need(self.min_errors >= 0, "min_errors must be >= 0")
        need(self.workers >= 1, "workers must be >= 1")
        for key in _LIST_KEYS:
            need(len(getattr(self, key)) > 0, f"grid {key!r} is empty")
        need(all(b > 0 for b in self.beta), "beta values must be positive")
        need(all(s >= 0 for s in self.sigma_m_frac), "sigma_m_frac values must be >= 0")
        need(all(not math.isnan(s) for s in self.snr_db), "snr_db values must be numbers")
        need(set(self.scheme) <= {"SCB", "ICB"}, f"scheme must be SCB/ICB, got {self.scheme}")
        need(self.detector in ("ZF", "MMSE"), f"detector must be ZF or MMSE, got {self.detector}")
        need(self.topology in ("proposed", "conventional", "both"),
             f"topology must be proposed, conventional or both, got {self.topology!r}")
        need(self.scenario in ("unit_lsfc", "cell"), f"unknown scenario {self.scenario!r}")
        need(self.cell_pathloss_model in PATHLOSS_MODELS,
             f"unknown path-loss model {self.cell_pathloss_model!r}")
        need(self.snr_convention in SNR_CONVENTIONS, f"unknown SNR convention {self.snr_convention!r}")
        need(self.realizability in ("strict", "clamp"), "realizability must be strict or clamp")
        need(0 < self.w_min < self.w_max, "need 0 < w_min < w_max")
        need(self.sigma_g > 0, "sigma_g must be positive")
        need(all(isinstance(k, int) and 1 <= k <= self.R for k in self.k_grid),
             "k_grid entries must be integers in [1, R]")

    @property
    def topologies(self) -> list[str]:
        return ["proposed", "conventional"] if self.topology == "both" else [self.topology]

    def cell(self) -> CellScenario:
        return CellScenario(
            radius=self.cell_radius,
            carrier_freq=self.cell_carrier_freq,
            bandwidth=self.cell_bandwidth,
            tx_power=self.cell_tx_power_dbm,
            noise_figure=self.cell_noise_figure_db,
            min_distance=self.cell_min_distance,
            pathloss_model=self.cell_pathloss_model,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("out_path", None)
        d.pop("workers", None)
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


def config_from_dict(d: dict) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    nested = [k for k, v in d.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"config must be flat; tables not allowed: {', '.join(nested)}")
    return ExperimentConfig(**d)


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)
