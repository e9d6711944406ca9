import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freqdoubler import engine, reference
from freqdoubler.engine import (ConvergenceError, NewtonOptions, SingularCircuitError, SingularMatrixError,
                                TranOptions, dc_sweep, kcl_residuals, linear_solve, solve_dc, solve_tran)
from freqdoubler.model import MosGeometry, device_k
from freqdoubler.netlist import load_netlist


def test_identity_solve():
    b = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(linear_solve(np.eye(3), b), b)


def test_two_by_two():
    x = linear_solve(np.array([[2.0, 1.0], [1.0, 3.0]]), np.array([3.0, 5.0]))
    np.testing.assert_allclose(x, [0.8, 1.4], rtol=1e-14)


def test_pivoting_needed():
    x = linear_solve(np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([2.0, 3.0]))
    np.testing.assert_array_equal(x, [3.0, 2.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_diagonally_dominant_residual(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1, 1, size=(n, n))
    a += np.diag(np.abs(a).sum(axis=1) + 1.0)
    b = rng.uniform(-1, 1, size=n)
    x = linear_solve(a, b)
    assert np.max(np.abs(a @ x - b)) <= 1e-10 * max(np.max(np.abs(b)), 1e-300)


def test_singular_reports_pivot():
    a = np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(SingularMatrixError) as info:
        linear_solve(a, np.ones(3))
    assert info.value.index == 1


def test_divider(divider_text):
    op = solve_dc(load_netlist(divider_text))
    assert op.v("2") == pytest.approx(0.5, abs=1e-12)
    assert op.iterations == 1 and op.strategy == "newton"
    # SPICE sign: current into the + terminal, negative while delivering power
    assert op.i("v1") == pytest.approx(-0.5e-3, rel=1e-12)


def _diode_oracle(card, geom, vdd, r, gmin):
    # scalar Newton on (vdd - v)/r = K (v - vt)^2 + gmin v
    k = device_k(card, geom)
    v = vdd
    for _ in range(200):
        f = (vdd - v) / r - k * max(v - card.vto, 0.0) ** 2 - gmin * v
        df = -1.0 / r - 2.0 * k * max(v - card.vto, 0.0) - gmin
        step = -f / df
        v += step
        if abs(step) < 1e-15:
            break
    return v


def test_diode_connected_nmos_matches_scalar_oracle(nmos):
    text = ".model nch nmos (vto=0.7640855 kp=1.259355e-4)\nV1 a 0 1.5\nR1 a d 10k\nM1 d d 0 0 nch W=1.5u L=0.15u\n"
    c = load_netlist(text)
    op = solve_dc(c)
    expect = _diode_oracle(c.models["nch"], MosGeometry(1.5e-6, 0.15e-6), 1.5, 1e4, NewtonOptions().gmin)
    assert op.v("d") == pytest.approx(expect, abs=1e-9)


@pytest.mark.parametrize("name", ["inverter", "diffamp", "sqrt", "doubler"])
@pytest.mark.parametrize("ms", ["matched", "table1"])
def test_kcl_holds_at_solution(name, ms):
    c = reference.BUILDERS[name](ms)
    op = solve_dc(c)
    opts = NewtonOptions()
    for node, (res, scale) in kcl_residuals(c, op).items():
        assert abs(res) <= 10 * (opts.abstol + opts.reltol * scale), node


def test_inverter_sweep_monotone_and_odd():
    c = reference.build_inverter("matched")
    up = dc_sweep(c, "vin", -1.5, 1.5, 0.01)
    assert up.converged.all()
    vin, vout = up.values, up.voltage("out")
    assert np.all(np.diff(vout) < 0)
    np.testing.assert_allclose(vout + vout[::-1], 0.0, atol=1e-6)
    down = dc_sweep(c, "vin", 1.5, -1.5, 0.01)
    np.testing.assert_allclose(down.voltage("out")[::-1], vout, atol=1e-9)


def test_divider_sweep(divider_text):
    s = dc_sweep(load_netlist(divider_text), "v1", 0.0, 2.0, 0.25)
    assert s.values.size == 9
    np.testing.assert_allclose(s.voltage("2"), 0.5 * s.values, atol=1e-12)


def test_current_source_sweep():
    s = dc_sweep(load_netlist("I1 0 a 1m\nR1 a 0 2k\n"), "i1", 0.0, 1e-3, 1e-4)
    np.testing.assert_allclose(s.voltage("a"), 2e3 * s.values, rtol=1e-12, atol=1e-15)


def test_sweep_unknown_source(divider_text):
    with pytest.raises(KeyError, match="unknown source vx"):
        dc_sweep(load_netlist(divider_text), "vx", 0, 1, 0.1)


RC = "V1 in 0 1\nR1 in out 1k\nC1 out 0 1u\n"


def test_rc_step_uic():
    res = solve_tran(load_netlist(RC), TranOptions(1e-6, 1e-3, uic=True))
    assert res.voltage("out")[-1] == pytest.approx(1 - math.exp(-1), abs=1e-3)


def test_rc_without_uic_starts_charged():
    res = solve_tran(load_netlist(RC), TranOptions(1e-5, 1e-3))
    np.testing.assert_allclose(res.voltage("out"), 1.0, atol=1e-12)


def _rc_error(h, integrator):
    c = load_netlist("V1 in 0 SIN(0 1 1k)\nR1 in out 1k\nC1 out 0 1u\n")
    res = solve_tran(c, TranOptions(h, 1e-3, integrator=integrator))
    tau, w = 1e-3, 2 * math.pi * 1e3
    t = res.time
    # exact response from v(0) = 0
    a = 1.0 / (1.0 + (w * tau) ** 2)
    exact = a * (np.sin(w * t) - w * tau * np.cos(w * t) + w * tau * np.exp(-t / tau))
    return np.max(np.abs(res.voltage("out") - exact))


def test_trapezoidal_is_second_order():
    ratio = _rc_error(2e-5, "trapezoidal") / _rc_error(1e-5, "trapezoidal")
    assert 3.0 <= ratio <= 5.0


def test_backward_euler_is_first_order():
    ratio = _rc_error(2e-5, "backward-euler") / _rc_error(1e-5, "backward-euler")
    assert 1.6 <= ratio <= 2.4


def test_sin_source_across_resistor():
    res = solve_tran(load_netlist("V1 a 0 SIN(0.2 0.5 1k)\nR1 a 0 1k\n"), TranOptions(1e-5, 2e-3))
    np.testing.assert_allclose(res.voltage("a"), 0.2 + 0.5 * np.sin(2 * np.pi * 1e3 * res.time), atol=1e-12)
    np.testing.assert_allclose(res.current("v1"), -res.voltage("a") / 1e3, atol=1e-15)


def test_transient_sample_grid():
    res = solve_tran(load_netlist(RC), TranOptions(1e-4, 1e-3))
    assert res.time.size == 11 and res.time[-1] == pytest.approx(1e-3)
    w = res.waveform("out")
    assert w.dt == 1e-4 and len(w) == 11


def test_floating_node_is_singular():
    # a capacitor-only node passes topology checks but has no DC path
    c = load_netlist("V1 a 0 1\nC1 a b 1u\nC2 b 0 1u\n")
    with pytest.raises(SingularCircuitError, match="v\\(b\\)"):
        solve_dc(c)


def test_runaway_reports_worst_node():
    c = load_netlist(".model n nmos (vto=0.75 kp=1e-4)\nI1 0 g 1\nM7 g g o 0 n\nM8 o g 0 0 n\n")
    with pytest.raises(ConvergenceError) as info:
        solve_dc(c, NewtonOptions(max_iter=20))
    assert "node" in str(info.value)
    assert info.value.op is not None and not info.value.op.converged


def test_transient_abort_has_timestamp(monkeypatch):
    c = load_netlist(RC)
    calls = {"n": 0}
    real = engine._Newton.solve

    def flaky(self, x, v, i, gmin):
        calls["n"] += 1
        if calls["n"] > 3:
            return 0, False
        return real(self, x, v, i, gmin)

    monkeypatch.setattr(engine._Newton, "solve", flaky)
    with pytest.raises(ConvergenceError) as info:
        solve_tran(c, TranOptions(1e-5, 1e-4))
    assert info.value.time == pytest.approx(3e-5)
    assert "t=3e-05" in str(info.value)


def test_options_validation():
    with pytest.raises(ValueError):
        TranOptions(1e-3, 1e-4)
    with pytest.raises(ValueError):
        TranOptions(1e-6, 1e-3, integrator="gear")
    with pytest.raises(ValueError):
        NewtonOptions(reltol=2.0)
