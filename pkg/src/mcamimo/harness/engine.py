"""Monte-Carlo BER sweeps, transient runs and power reports."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy import stats

from .. import __version__
from ..channel import gen_lsfc_cell, gen_ssfc, realify, realify_vector
from ..circuit import (
    MappingScheme,
    TransientSpec,
    build_conventional,
    build_proposed,
    solve_algebraic,
    transient_solve,
    write_trace_csv,
)
from ..detectors import mmse_detect, regularizer_matrix, zf_detect
from ..errors import RealizabilityError, SingularityError
from ..mapping import ConductanceRange, ErrorModel
from ..metrics import (
    GpuBaseline,
    PowerModel,
    compute_metrics,
    equivalent_flops,
    rapc,
    total_power,
    total_power_for,
)
from ..modem import QAM64, NoiseSpec, count_bit_errors, demodulate, modulate, noise_for_snr, random_bits
from .config import ExperimentConfig
from .rng import block_seeds, generator, point_key

CI_LEVEL = 0.95


def clopper_pearson(k: int, n: int, level: float = CI_LEVEL):
    if n == 0:
        return 0.0, 1.0
    a = (1 - level) / 2
    lo = 0.0 if k == 0 else float(stats.beta.ppf(a, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - a, k + 1, n - k))
    return lo, hi


@dataclass
class BerRecord:
    scenario: str
    snr_db: float
    sigma_m_frac: float
    scheme: str
    beta: float
    detector: str
    topology: str
    trials: int
    bit_errors: int
    bits: int
    ber: float
    ci_low: float
    ci_high: float
    clip_fraction: float
    failures: int
    clamped_devices: int

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class Variant:
    """One detector realization evaluated at a grid point."""

    topology: str  # "proposed", "conventional" or "digital"
    scheme: str = "none"  # "SCB", "ICB" or "none"
    beta: float = float("nan")

    @property
    def mapping(self) -> MappingScheme | None:
        if self.scheme == "SCB":
            return MappingScheme.scb(self.beta)
        if self.scheme == "ICB":
            return MappingScheme.icb()
        return None


DIGITAL = Variant("digital")


@dataclass(frozen=True)
class GridPoint:
    """Noise level and device error level shared by a set of paired variants."""

    snr_db: float
    sigma_m_frac: float

    def key(self) -> int:
        snr = None if math.isnan(self.snr_db) else self.snr_db
        return point_key(snr, self.sigma_m_frac)


@dataclass
class PointResult:
    """Per-variant tallies at one grid point, with per-block error counts.

    ``block_errors[v]`` has one entry per simulated block (-1 for a failed
    block), so any two variants can be compared block by block.
    """

    point: GridPoint
    variants: list
    records: list
    block_errors: dict
    bits_per_block: int


class _Tally:
    __slots__ = ("errors", "bits", "trials", "failures", "clips", "mapped", "clamped", "blocks")

    def __init__(self):
        self.errors = self.bits = self.trials = self.failures = 0
        self.clips = self.mapped = self.clamped = 0
        self.blocks = []


def _draw_block(cfg: ExperimentConfig, seeds, snr_db):
    """Channel, symbols and noise for one block of ``channel_redraws`` trials."""
    T = cfg.channel_redraws
    rng_ch = generator(seeds["channel"])
    c = gen_ssfc(cfg.R, cfg.K, cfg.sigma_g, rng_ch)
    if cfg.scenario == "cell":
        cell = cfg.cell()
        lam, _ = gen_lsfc_cell(cfg.K, cell, rng_ch)
        c = c.with_lsfc(lam)
        noise = NoiseSpec(cell.noise_to_tx_ratio)  # symbols carry unit transmit power
    else:
        noise = noise_for_snr(snr_db, lam=c.lam, sigma_g=cfg.sigma_g, R=cfg.R,
                              convention=cfg.snr_convention)
    ch = realify(c)
    bits = random_bits((T, cfg.K * QAM64.bits_per_symbol), generator(seeds["symbols"]))
    s = realify_vector(modulate(bits).T)  # (2K, T)
    n = generator(seeds["noise"]).standard_normal((2 * cfg.R, T)) * math.sqrt(noise.per_real_dim)
    y = ch.H @ s + n
    return ch, bits, y, noise


def _build(cfg, topology, scheme, ch, rho, err, crange, dev_rng, input_gain):
    # without noise the MMSE regularizer vanishes and the circuit is the ZF one
    mmse = cfg.detector == "MMSE" and rho > 0
    if topology == "proposed":
        P = regularizer_matrix(ch.lam, rho) if mmse else None
        return build_proposed(ch.G, ch.Lambda, P, scheme, crange, err, dev_rng,
                              sigma_g=cfg.sigma_g, input_gain=input_gain, policy=cfg.realizability)
    return build_conventional(ch.H, rho if mmse else None, scheme, crange, err, dev_rng,
                              lam=ch.lam, sigma_g=cfg.sigma_g, input_gain=input_gain,
                              policy=cfg.realizability)


def _error_model(cfg, sigma_frac, crange):
    return ErrorModel.from_fraction(sigma_frac, crange, perturb_feedback=cfg.perturb_feedback,
                                    perturb_amplifier=cfg.perturb_amplifier, reclip=cfg.reclip)


def simulate_point(cfg: ExperimentConfig, point: GridPoint, variants: list[Variant]) -> PointResult:
    """Run every variant on the same random draws.

    Channels, symbols and noise are shared by all variants; circuit variants
    also get the same device-error stream, so differences between variants
    come from the detector alone. Blocks of ``channel_redraws`` trials run
    until at least ``trials`` trials are done and every variant has
    ``min_errors`` bit errors, or ``max_trials`` is reached.
    """
    crange = ConductanceRange(cfg.w_min, cfg.w_max)
    err = _error_model(cfg, point.sigma_m_frac, crange)
    key = point.key()
    tallies = [_Tally() for _ in variants]
    T = cfg.channel_redraws
    bits_per_block = T * cfg.K * QAM64.bits_per_symbol
    block = 0
    done = 0
    while True:
        seeds = block_seeds(cfg.seed, key, block)
        ch, bits, y, noise = _draw_block(cfg, seeds, point.snr_db)
        rho = noise.sigma_n_sq / QAM64.p_s
        peak = float(np.max(np.abs(y)))
        input_gain = 1e-6 / peak if peak > 0 else 1e-6
        for v, tl in zip(variants, tallies):
            tl.trials += T
            try:
                if v.topology == "digital":
                    if cfg.detector == "MMSE":
                        s_hat = mmse_detect(ch.H, y, rho)
                    else:
                        s_hat = zf_detect(ch.H, y)
                else:
                    circ = _build(cfg, v.topology, v.mapping, ch, rho, err, crange,
                                  generator(seeds["devices"]), input_gain)
                    tl.clips += circ.clip_count
                    tl.mapped += circ.n_mapped
                    tl.clamped += len(circ.clamped)
                    s_hat = solve_algebraic(circ, y).s_hat
            except (SingularityError, RealizabilityError):
                tl.failures += T
                tl.blocks.append(-1)
                continue
            e = count_bit_errors(bits, demodulate(s_hat.T))
            tl.errors += e
            tl.bits += bits.size
            tl.blocks.append(e)
        done += T
        block += 1
        if done >= cfg.max_trials:
            break
        if done >= cfg.trials and all(t.errors >= cfg.min_errors for t in tallies):
            break

    records = []
    snr = float("nan") if cfg.scenario == "cell" else float(point.snr_db)
    for v, tl in zip(variants, tallies):
        lo, hi = clopper_pearson(tl.errors, tl.bits)
        records.append(BerRecord(
            scenario=cfg.scenario,
            snr_db=snr,
            sigma_m_frac=float(point.sigma_m_frac),
            scheme=v.scheme,
            beta=float(v.beta),
            detector=cfg.detector,
            topology=v.topology,
            trials=tl.trials,
            bit_errors=tl.errors,
            bits=tl.bits,
            ber=tl.errors / tl.bits if tl.bits else float("nan"),
            ci_low=lo,
            ci_high=hi,
            clip_fraction=tl.clips / tl.mapped if tl.mapped else 0.0,
            failures=tl.failures,
            clamped_devices=tl.clamped,
        ))
    return PointResult(point, list(variants), records,
                       {v: np.array(t.blocks) for v, t in zip(variants, tallies)}, bits_per_block)


def paired_difference_ci(res: PointResult, a: Variant, b: Variant, level: float = CI_LEVEL):
    """BER(a) - BER(b) with a t-interval over paired blocks.

    Blocks are independent and each holds the same draws for both variants,
    so the per-block differences are i.i.d. Blocks where either variant
    failed are dropped.
    """
    ea, eb = res.block_errors[a], res.block_errors[b]
    ok = (ea >= 0) & (eb >= 0)
    d = (ea[ok] - eb[ok]) / res.bits_per_block
    n = d.size
    if n < 2:
        return float("nan"), -math.inf, math.inf
    mean = float(d.mean())
    half = float(stats.t.ppf(0.5 + level / 2, n - 1) * d.std(ddof=1) / math.sqrt(n))
    return mean, mean - half, mean + half


def _point_task(args):
    cfg, point, variants = args
    return simulate_point(cfg, point, variants)


def run_points(cfg: ExperimentConfig, tasks) -> list[PointResult]:
    """Evaluate ``(GridPoint, variants)`` tasks, in worker processes if configured."""
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            return list(ex.map(_point_task, [(cfg, p, v) for p, v in tasks]))
    return [simulate_point(cfg, p, v) for p, v in tasks]


def _records(results) -> list[BerRecord]:
    return [r for res in results for r in res.records]


def _snr_axis(cfg):
    # the cell scenario fixes the noise level from the link budget
    return [float("nan")] if cfg.scenario == "cell" else [float(s) for s in cfg.snr_db]


def grid_variants(cfg: ExperimentConfig, schemes=None, digital=None) -> list[Variant]:
    schemes = cfg.scheme if schemes is None else schemes
    digital = cfg.include_digital if digital is None else digital
    out = [DIGITAL] if digital else []
    for topo in cfg.topologies:
        for scheme in schemes:
            if scheme == "ICB":
                out.append(Variant(topo, "ICB"))
            else:
                out.extend(Variant(topo, "SCB", float(b)) for b in cfg.beta)
    return out


def _grid_tasks(cfg: ExperimentConfig, variants):
    return [(GridPoint(snr, float(sigma)), variants)
            for snr in _snr_axis(cfg) for sigma in cfg.sigma_m_frac]


def _check_writable(path):
    if path is None:
        return
    d = os.path.dirname(os.path.abspath(path)) or "."
    if not os.path.isdir(d) or not os.access(d, os.W_OK):
        raise OSError(f"output directory {d!r} is not writable")


def run_ber_sweep(cfg: ExperimentConfig) -> list[BerRecord]:
    """Full grid: SNR x sigma_m x scheme/beta, each topology, plus digital baseline."""
    _check_writable(cfg.out_path)
    records = _records(run_points(cfg, _grid_tasks(cfg, grid_variants(cfg))))
    if cfg.out_path:
        write_records(records, cfg, "ber-sweep")
    return records


def run_beta_study(cfg: ExperimentConfig) -> list[BerRecord]:
    """BER versus beta at one SNR, for every sigma_m; ICB is added as a reference line."""
    _check_writable(cfg.out_path)
    snr = cfg.snr_db[:1]
    schemes = ["SCB", "ICB"]
    sub = cfg.with_overrides(snr_db=snr, scheme=schemes)
    records = _records(run_points(sub, _grid_tasks(sub, grid_variants(sub))))
    if cfg.out_path:
        write_records(records, sub, "beta-study")
    return records


def run_topology_compare(cfg: ExperimentConfig) -> list[BerRecord]:
    """Proposed versus conventional circuit on paired draws; set ``scenario = "cell"`` for the cell study."""
    _check_writable(cfg.out_path)
    sub = cfg.with_overrides(topology="both")
    records = _records(run_points(sub, _grid_tasks(sub, grid_variants(sub))))
    if cfg.out_path:
        write_records(records, sub, "compare")
    return records


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def write_csv(rows: list[dict], columns: list[str], path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def defaults_in_effect(cfg: ExperimentConfig) -> dict:
    return {
        "sigma_g": cfg.sigma_g,
        "snr_convention": cfg.snr_convention,
        "lsfc_unit_outside_cell": True,
        "cell_pathloss_model": cfg.cell_pathloss_model,
        "cell_noise_figure_db": cfg.cell_noise_figure_db,
        "cell_min_distance_m": cfg.cell_min_distance,
        "ut_placement": "uniform over annulus area",
        "slicer_ties": "smaller magnitude; zero goes to the lower level",
        "bit_order": "first half in-phase, second half quadrature, Gray per dimension",
        "perturbed_conductances_reclipped": cfg.reclip,
        "perturb_feedback": cfg.perturb_feedback,
        "perturb_amplifier": cfg.perturb_amplifier,
        "independent_errors_per_crossbar_copy": True,
        "delta0_nominal": ("w_max, lowered to fit delta_k when needed" if cfg.realizability == "strict"
                           else "w_max; out-of-range delta_k clamped"),
        "theta0_nominal": "w_max; largest theta_k = w_max",
        "zf_delta_branch": "omitted",
        "realizability": cfg.realizability,
        "input_gain": "1 uA / max|y| per channel block",
        "channel_redraws": cfg.channel_redraws,
        "stop_rule": f"at least {cfg.trials} trials, then until {cfg.min_errors} bit errors "
                     f"per variant, capped at {cfg.max_trials}",
        "rng": "Philox substreams keyed by (seed, grid point key, block index)",
        "ci": f"Clopper-Pearson {CI_LEVEL:.0%}",
    }


def write_meta(path, cfg: ExperimentConfig, command: str, extra: dict | None = None):
    stem, _ = os.path.splitext(path)
    meta = {
        "command": command,
        "code_version": __version__,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict(),
        "defaults": defaults_in_effect(cfg),
    }
    if extra:
        meta.update(extra)
    with open(stem + ".meta", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def write_records(records: list[BerRecord], cfg: ExperimentConfig, command: str):
    write_csv([asdict(r) for r in records], BerRecord.columns(), cfg.out_path)
    write_meta(cfg.out_path, cfg, command)


@dataclass
class TransientReport:
    topology: str
    settle_time: float
    final_rel_error: float
    trace_path: str | None


def run_transient(cfg: ExperimentConfig) -> list[TransientReport]:
    """Step response of each configured topology on one channel/symbol draw.

    Uses the first SNR, sigma_m, scheme and beta of the config and the first
    trial of block 0. With ``out_path`` set, writes one trace CSV per topology
    (``<stem>_<topology>.csv``) plus the metadata sidecar.
    """
    _check_writable(cfg.out_path)
    snr = _snr_axis(cfg)[0]
    sigma = cfg.sigma_m_frac[0]
    point = GridPoint(snr, float(sigma))
    scheme = grid_variants(cfg.with_overrides(scheme=cfg.scheme[:1], beta=cfg.beta[:1]),
                           digital=False)[0].mapping
    seeds = block_seeds(cfg.seed, point.key(), 0)
    ch, _, y, noise = _draw_block(cfg, seeds, snr)
    y0 = y[:, 0]
    crange = ConductanceRange(cfg.w_min, cfg.w_max)
    err = _error_model(cfg, sigma, crange)
    spec = TransientSpec(gbp=cfg.gbp, dc_gain=cfg.dc_gain, t_end=cfg.t_end, settle_tol=cfg.settle_tol)
    rho = noise.sigma_n_sq / QAM64.p_s
    peak = float(np.max(np.abs(y0)))
    reports = []
    for topo in cfg.topologies:
        circ = _build(cfg, topo, scheme, ch, rho, err, crange, generator(seeds["devices"]), 1e-6 / peak)
        alg = solve_algebraic(circ, y0)
        ref = alg.vout if alg.vout is not None else alg.v2
        res = transient_solve(circ, y0, spec)
        rel = float(np.max(np.abs(res.final - ref)) / np.max(np.abs(ref)))
        path = None
        if cfg.out_path:
            stem, ext = os.path.splitext(cfg.out_path)
            path = f"{stem}_{topo}{ext or '.csv'}"
            write_trace_csv(res, path, every=cfg.trace_every, include_v2=True)
        reports.append(TransientReport(topo, res.settle_time, rel, path))
    if cfg.out_path:
        write_meta(cfg.out_path, cfg, "transient",
                   {"settle_times_s": {r.topology: r.settle_time for r in reports}})
    return reports


POWER_COLUMNS = ["K", "topology", "p_total_w", "rapc", "flops", "tops", "tops_per_watt",
                 "ee_ratio_vs_gpu"]


def _device_power(cfg, K, topo, seed_key):
    """Static device dissipation on a representative unit-LSFC instance."""
    seeds = block_seeds(cfg.seed, seed_key, 0)
    sub = cfg.with_overrides(K=K, scenario="unit_lsfc")
    ch, _, y, noise = _draw_block(sub, seeds, 15.0 if math.isnan(sub.snr_db[0]) else sub.snr_db[0])
    crange = ConductanceRange(cfg.w_min, cfg.w_max)
    scheme = MappingScheme.icb()
    peak = float(np.max(np.abs(y[:, 0])))
    circ = _build(sub, topo, scheme, ch, noise.sigma_n_sq / QAM64.p_s, ErrorModel(), crange,
                  generator(seeds["devices"]), 1e-6 / peak)
    return circ, solve_algebraic(circ, y[:, 0])


def run_power_report(cfg: ExperimentConfig) -> list[dict]:
    """Power, RAPC, equivalent FLOPs, TOPS and TOPS/W over ``k_grid``."""
    _check_writable(cfg.out_path)
    pm = PowerModel(p_oa=cfg.p_oa, p_dac=cfg.p_dac, p_adc=cfg.p_adc,
                    include_crossbar_dissipation=cfg.include_crossbar_dissipation)
    gpu = GpuBaseline(cfg.gpu_tflops, cfg.gpu_watts)
    rows = []
    for K in cfg.k_grid:
        power = {}
        for topo in ("conventional", "proposed"):
            if pm.include_crossbar_dissipation:
                circ, sol = _device_power(cfg, K, topo, point_key("power", K))
                power[topo] = total_power(circ, sol, pm)
            else:
                power[topo] = total_power_for(cfg.R, K, topo, pm)
        flops = equivalent_flops(cfg.R, K, cfg.detector)
        for topo in ("proposed", "conventional"):
            m = compute_metrics(flops, cfg.compute_time_s, power[topo])
            rows.append({
                "K": K,
                "topology": topo,
                "p_total_w": power[topo],
                "rapc": rapc(power["proposed"], power["conventional"]) if topo == "proposed" else float("nan"),
                "flops": flops,
                "tops": m.tops,
                "tops_per_watt": m.tops_per_watt,
                "ee_ratio_vs_gpu": m.ee_ratio(gpu),
            })
    if cfg.out_path:
        write_csv(rows, POWER_COLUMNS, cfg.out_path)
        write_meta(cfg.out_path, cfg, "power")
    return rows


__all__ = [
    "BerRecord",
    "DIGITAL",
    "GridPoint",
    "PointResult",
    "TransientReport",
    "Variant",
    "clopper_pearson",
    "grid_variants",
    "paired_difference_ci",
    "run_ber_sweep",
    "run_beta_study",
    "run_points",
    "run_power_report",
    "run_topology_compare",
    "run_transient",
    "simulate_point",
]
