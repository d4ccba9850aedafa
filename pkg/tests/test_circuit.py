import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcamimo.channel import gen_ssfc, realify
from mcamimo.circuit import (
    MappingScheme,
    Topology,
    TransientSpec,
    build_conventional,
    build_proposed,
    follower_step,
    kcl_residuals,
    solve_algebraic,
    transient_solve,
    write_trace_csv,
)
from mcamimo.detectors import (
    mmse_detect,
    mmse_detect_factored,
    regularizer_matrix,
    zf_detect,
    zf_detect_factored,
)
from mcamimo.errors import ConvergenceError, ParameterError, RealizabilityError
from mcamimo.mapping import DEFAULT_RANGE, ErrorModel

ICB = MappingScheme.icb()


def _channel(rng, R=4, K=2, lam=None):
    c = gen_ssfc(R, K, 1 / math.sqrt(2), rng)
    if lam is None:
        lam = rng.uniform(0.3, 3.0, K)
    return realify(c.with_lsfc(np.asarray(lam, float)))


def _rel(a, b):
    return np.max(np.abs(a - b)) / np.max(np.abs(b))


def test_identity_channel_round_trips():
    y = np.array([0.4, -0.9])
    c = build_proposed(np.eye(2), np.eye(2), None, ICB)
    assert np.allclose(solve_algebraic(c, y).s_hat, y, rtol=1e-12)
    c = build_conventional(np.eye(2), None, ICB)
    assert np.allclose(solve_algebraic(c, y).s_hat, y, rtol=1e-12)


def test_proposed_mmse_matches_factored_oracle():
    rng = np.random.default_rng(0)
    ch = _channel(rng)
    y = rng.standard_normal(8)
    rho = 0.2
    c = build_proposed(ch.G, ch.Lambda, regularizer_matrix(ch.lam, rho), ICB)
    assert _rel(solve_algebraic(c, y).s_hat, mmse_detect_factored(ch.G, ch.Lambda, y, rho)) < 1e-6


def test_proposed_zf_matches_factored_oracle():
    rng = np.random.default_rng(1)
    ch = _channel(rng, 8, 2)
    y = rng.standard_normal(16)
    c = build_proposed(ch.G, ch.Lambda, None, ICB)
    assert _rel(solve_algebraic(c, y).s_hat, zf_detect_factored(ch.G, ch.Lambda, y)) < 1e-6


def test_conventional_matches_digital_oracle():
    rng = np.random.default_rng(2)
    ch = _channel(rng)
    y = rng.standard_normal(8)
    c = build_conventional(ch.H, 0.3, ICB)
    assert _rel(solve_algebraic(c, y).s_hat, mmse_detect(ch.H, y, 0.3)) < 1e-6
    c = build_conventional(ch.H, None, ICB)
    assert _rel(solve_algebraic(c, y).s_hat, zf_detect(ch.H, y)) < 1e-6


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), mmse=st.booleans())
def test_node_equations_hold(seed, mmse):
    rng = np.random.default_rng(seed)
    ch = _channel(rng)
    y = rng.standard_normal(8)
    P = regularizer_matrix(ch.lam, 0.05) if mmse else None
    c = build_proposed(ch.G, ch.Lambda, P, ICB, err=ErrorModel.from_fraction(0.01), rng=rng,
                       policy="clamp")
    sol = solve_algebraic(c, y)
    r1, s1, r2, s2 = kcl_residuals(c, sol)
    assert np.max(np.abs(r1)) <= 1e-10 * s1
    assert np.max(np.abs(r2)) <= 1e-10 * s2


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), a=st.floats(-5, 5), b=st.floats(-5, 5))
def test_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    ch = _channel(rng)
    c = build_proposed(ch.G, ch.Lambda, regularizer_matrix(ch.lam, 0.1), ICB,
                       err=ErrorModel.from_fraction(0.01), rng=rng, policy="clamp")
    y1, y2 = rng.standard_normal((2, 8))
    lhs = solve_algebraic(c, a * y1 + b * y2).s_hat
    rhs = a * solve_algebraic(c, y1).s_hat + b * solve_algebraic(c, y2).s_hat
    assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-9)


def test_zero_input_gives_zero_voltages():
    rng = np.random.default_rng(3)
    ch = _channel(rng)
    c = build_proposed(ch.G, ch.Lambda, regularizer_matrix(ch.lam, 0.1), ICB)
    sol = solve_algebraic(c, np.zeros(8))
    assert not np.any(sol.v1) and not np.any(sol.v2) and not np.any(sol.vout)


def test_amplifier_ratios_follow_sqrt_lambda():
    G = np.random.default_rng(4).standard_normal((8, 4))
    lam_sqrt = np.sqrt([1.0, 100.0, 1.0, 100.0])
    c = build_proposed(G, np.diag(lam_sqrt), None, ICB)
    r = c.gain_ratios
    assert r.max() / r.min() == pytest.approx(10.0)
    assert c.theta.max() == pytest.approx(DEFAULT_RANGE.w_max)
    assert np.all(DEFAULT_RANGE.contains(c.theta))


def test_input_gain_scaling():
    rng = np.random.default_rng(5)
    ch = _channel(rng)
    y = rng.standard_normal(8)
    c1 = build_proposed(ch.G, ch.Lambda, None, ICB, input_gain=1e-6)
    c2 = build_proposed(ch.G, ch.Lambda, None, ICB, input_gain=2e-6)
    assert c2.output_scale == pytest.approx(c1.output_scale / 2)
    assert np.allclose(solve_algebraic(c1, y).s_hat, solve_algebraic(c2, y).s_hat, rtol=1e-12)


def test_conventional_reads_inverted_v2():
    rng = np.random.default_rng(6)
    ch = _channel(rng)
    y = rng.standard_normal(8)
    c = build_conventional(ch.H, None, ICB)
    sol = solve_algebraic(c, y)
    assert c.kind is Topology.CONVENTIONAL and c.theta is None and sol.vout is None
    assert np.allclose(sol.s_hat, -c.output_scale * sol.v2)


def test_unit_lsfc_topologies_clip_alike():
    rng = np.random.default_rng(7)
    clip_p, clip_c = [], []
    for _ in range(200):
        ch = _channel(rng, 16, 4, lam=np.ones(4))
        s = MappingScheme.scb(2.0)
        clip_p.append(build_proposed(ch.G, ch.Lambda, None, s).clip_fraction)
        clip_c.append(build_conventional(ch.H, None, s, lam=ch.lam).clip_fraction)
    assert np.mean(clip_p) == pytest.approx(np.mean(clip_c), rel=1e-12)


def test_strict_policy_names_device():
    G = np.random.default_rng(8).standard_normal((8, 4))
    lam_sqrt = np.sqrt([1.0, 1e6, 1.0, 1e6])  # theta ratio 1000 > w_max / w_min
    with pytest.raises(RealizabilityError) as exc:
        build_proposed(G, np.diag(lam_sqrt), None, ICB, policy="strict")
    assert exc.value.device.startswith("theta")
    c = build_proposed(G, np.diag(lam_sqrt), None, ICB, policy="clamp")
    assert any(d.startswith("theta") for d in c.clamped)


def test_feedback_split_strict_and_clamp():
    G = np.random.default_rng(9).standard_normal((8, 2))
    # regularizer spread far wider than the device range can cover
    P = np.array([1e-9, 1e3])
    with pytest.raises(RealizabilityError) as exc:
        build_proposed(G, np.eye(2), P, ICB, policy="strict")
    assert exc.value.device.startswith("delta_fb")
    c = build_proposed(G, np.eye(2), P, ICB, policy="clamp")
    assert np.all(c.delta0 == DEFAULT_RANGE.w_max)
    assert np.all(DEFAULT_RANGE.contains(c.delta_fb)) and c.clamped


def test_feasible_split_is_exact():
    rng = np.random.default_rng(10)
    ch = _channel(rng)
    P = regularizer_matrix(ch.lam, 0.05)
    c = build_proposed(ch.G, ch.Lambda, P, ICB, policy="strict")
    assert np.allclose(np.diag(c.Delta), c.alpha**2 * np.diag(P), rtol=1e-12)


def test_scb_conventional_needs_lambda():
    with pytest.raises(ParameterError):
        build_conventional(np.eye(2), None, MappingScheme.scb(3.0))


# transient


def test_follower_time_constant():
    spec = TransientSpec(gbp=500e6, t_end=20e-9)
    t, v = follower_step(spec, 1.0)
    v_final = spec.dc_gain / (spec.dc_gain + 1)
    target = (1 - math.exp(-1)) * v_final
    k = np.searchsorted(v, target)
    t63 = t[k - 1] + (target - v[k - 1]) * (t[k] - t[k - 1]) / (v[k] - v[k - 1])
    assert t63 == pytest.approx(1 / (2 * math.pi * spec.gbp), rel=0.02)


def _unit_instance(topology, seed=11):
    rng = np.random.default_rng(seed)
    ch = _channel(rng, 64, 4, lam=np.ones(4))
    y = rng.standard_normal(128)
    gain = 1e-6 / np.max(np.abs(y))
    P = regularizer_matrix(ch.lam, 0.1)
    if topology == "proposed":
        c = build_proposed(ch.G, ch.Lambda, P, ICB, input_gain=gain)
    else:
        c = build_conventional(ch.H, 0.1, ICB, input_gain=gain)
    return c, y


@pytest.mark.parametrize("topology", ["proposed", "conventional"])
def test_transient_converges_to_algebraic(topology):
    c, y = _unit_instance(topology)
    res = transient_solve(c, y)
    alg = solve_algebraic(c, y)
    ref = alg.vout if alg.vout is not None else alg.v2
    assert _rel(res.final, ref) < 1e-3
    assert 20e-9 <= res.settle_time <= 400e-9
    assert _rel(res.s_hat(c), alg.s_hat) < 1e-3


def test_settle_time_drops_with_gbp():
    c, y = _unit_instance("proposed")
    t1 = transient_solve(c, y, TransientSpec(gbp=500e6)).settle_time
    t2 = transient_solve(c, y, TransientSpec(gbp=1e9)).settle_time
    assert t2 < t1


def test_transient_reports_non_convergence():
    c, y = _unit_instance("proposed")
    with pytest.raises(ConvergenceError) as exc:
        transient_solve(c, y, TransientSpec(t_end=5e-9))
    assert exc.value.residual > 0


def test_transient_spec_validation():
    with pytest.raises(ParameterError):
        TransientSpec(gbp=0.0)
    with pytest.raises(ParameterError):
        TransientSpec(dt=1e-9)
    assert TransientSpec(gbp=1e9).dt == pytest.approx(1 / (2 * math.pi * 1e9) / 20)


def test_trace_csv(tmp_path):
    c, y = _unit_instance("proposed")
    res = transient_solve(c, y, TransientSpec(t_end=200e-9))
    path = tmp_path / "trace.csv"
    write_trace_csv(res, path, every=50, include_v2=True)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert set(rows[0]) == {"time_s", "node_name", "voltage_V"}
    nodes = {r["node_name"] for r in rows}
    assert {f"vout[{j}]" for j in range(8)} <= nodes and "v2[0]" in nodes
    last = [r for r in rows if r["time_s"] == rows[-1]["time_s"] and r["node_name"].startswith("vout")]
    k_last = (res.t.size - 1) // 50 * 50
    assert np.allclose([float(r["voltage_V"]) for r in last], res.outputs[k_last], rtol=1e-8)
