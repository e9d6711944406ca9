import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize

from freqdoubler import analysis
from freqdoubler.analysis import (DOUBLER_GAIN, ROOT_CONSTANT, AnalysisError, ChainParams, RootMode, Waveform,
                                  behav_diffamp_current, behav_doubler, behav_inverter, behav_series_approx,
                                  behav_sqrt, estimate_period, goertzel, harmonic_report, series_rms_error)

K = 6.296775e-4
VT = 0.7640855
P = ChainParams(K, VT)
DT = 1e-6


def sine(a, f, phase=0.0):
    return lambda t: a * np.sin(2 * np.pi * f * t + phase)


def test_goertzel_unit_amplitude():
    w = Waveform.sample(sine(0.1, 1e3), 4e-3, DT)
    mag, phase = goertzel(w, 1e3)
    assert mag == pytest.approx(0.1, abs=1e-9)
    assert phase == pytest.approx(-math.pi / 2, abs=1e-9)
    assert goertzel(w, 2e3)[0] == pytest.approx(0.0, abs=1e-9)


def test_goertzel_two_tones():
    w = Waveform.sample(lambda t: sine(0.1, 1e3)(t) + sine(0.05, 2e3)(t), 4e-3, DT)
    assert goertzel(w, 1e3)[0] == pytest.approx(0.1, abs=1e-9)
    assert goertzel(w, 2e3)[0] == pytest.approx(0.05, abs=1e-9)


def test_goertzel_accepts_closed_interval_record():
    t = np.arange(4001) * DT
    w = Waveform(0.0, DT, 0.1 * np.sin(2 * np.pi * 1e3 * t))
    assert goertzel(w, 1e3)[0] == pytest.approx(0.1, abs=1e-9)
    assert goertzel(w, 2e3)[0] < 1e-9


def test_goertzel_errors():
    w = Waveform.sample(sine(1, 1e3), 4e-3, DT)
    with pytest.raises(AnalysisError, match="Nyquist"):
        goertzel(w, 5e5)
    with pytest.raises(AnalysisError, match="integer number"):
        goertzel(w, 1.3e3)
    with pytest.raises(AnalysisError):
        Waveform(0.0, 0.0, np.ones(4))
    with pytest.raises(AnalysisError):
        Waveform(0.0, 1.0, np.ones(1))


@settings(max_examples=40, deadline=None)
@given(st.integers(16, 400), st.lists(st.floats(-1, 1), min_size=6, max_size=6), st.integers(0, 2**32 - 1))
def test_goertzel_matches_fft(n, amps, seed):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    bins = rng.integers(1, n // 2, size=3)
    x = sum(a * np.cos(2 * np.pi * k * t / n) + b * np.sin(2 * np.pi * k * t / n)
            for k, a, b in zip(bins, amps[::2], amps[1::2]))
    spectrum = np.fft.rfft(x)
    w = Waveform(0.0, 1.0 / n, x)
    for k in range(1, n // 2):
        if 2 * k == n:
            continue
        assert goertzel(w, float(k))[0] == pytest.approx(2 * abs(spectrum[k]) / n, abs=1e-9)


def test_harmonic_report_abs_sine():
    w = Waveform.sample(lambda t: np.abs(np.sin(2 * np.pi * 1e3 * t)), 4e-3, DT)
    r = harmonic_report(w, 1e3, 4)
    assert r.dc == pytest.approx(2 / math.pi, abs=1e-4)
    assert r.mags[1] < 1e-9
    assert r.mags[2] == pytest.approx(4 / (3 * math.pi), rel=1e-3)
    assert r.mags[0] == abs(r.dc)


def test_harmonic_report_pure_sine_and_csv():
    r = harmonic_report(Waveform.sample(sine(0.3, 1e3), 4e-3, DT), 1e3, 3)
    assert r.doubling_ratio < 1e-6 and r.thd < 1e-6
    lines = r.to_csv().splitlines()
    assert lines[0] == "k,freq_hz,magnitude_v"
    assert [ln.split(",")[:2] for ln in lines[1:]] == [["1", "1000.0"], ["2", "2000.0"], ["3", "3000.0"]]


def test_thd_against_direct_formula():
    f = lambda t: np.sin(2 * np.pi * 1e3 * t) + 0.1 * np.sin(6 * np.pi * 1e3 * t) + 0.05 * np.sin(10 * np.pi * 1e3 * t)
    r = harmonic_report(Waveform.sample(f, 4e-3, DT), 1e3, 5)
    assert r.thd == pytest.approx(math.hypot(0.1, 0.05), rel=1e-8)


def test_estimate_period():
    w = Waveform.sample(sine(1, 2e3), 4e-3, DT)
    assert estimate_period(w) == pytest.approx(5e-4, abs=DT)
    with pytest.raises(AnalysisError):
        estimate_period(Waveform(0, 1, np.ones(10)))


@pytest.mark.parametrize("vin, out", [(0.1, -0.1), (0.0, 0.0), (-0.25, 0.25)])
def test_inverter_matched(vin, out):
    assert behav_inverter(vin, P) == out


def test_inverter_unmatched_balances_currents():
    p = ChainParams(K, VT, beta_ratio=3.2, vtp=0.9444911)
    vin = np.linspace(-0.1, 0.1, 21)
    u = behav_inverter(vin, p)
    kp = K / 3.2
    # NMOS (driver + load) current equals PMOS current at the output node
    a, b = 1.5 - 0.9444911, 1.5 - VT
    n_side = K * ((b + vin) ** 2 + (b + u) ** 2)
    p_side = kp * ((a - vin) ** 2 + (a - u) ** 2)
    np.testing.assert_allclose(n_side, p_side, rtol=1e-12)


def test_diffamp_examples():
    assert behav_diffamp_current(0.0, P) == pytest.approx(2 * K * (VT - 1.5) ** 2, rel=1e-15)
    assert behav_diffamp_current(0.1, P) == pytest.approx(6.946e-4, rel=1e-4)
    assert behav_diffamp_current(0.1, P, dc_removed=True) == pytest.approx(2 * K * 0.01, rel=1e-15)
    with pytest.raises(AnalysisError):
        behav_diffamp_current(0.8, P)


@given(st.floats(-0.7, 0.7))
def test_diffamp_dc_cancels(v):
    assert behav_diffamp_current(v, P) - behav_diffamp_current(0.0, P) == pytest.approx(2 * K * v * v, abs=1e-15)


def test_sqrt_examples():
    assert behav_sqrt(K, K) == pytest.approx(0.7320508, abs=1e-7)
    assert behav_sqrt(K, K, "consistent") == pytest.approx(0.4142136, abs=1e-7)
    assert behav_sqrt(0.0, K) == 0.0
    with pytest.raises(AnalysisError):
        behav_sqrt(-1e-9, K)


@pytest.mark.parametrize("mode, a, b", [(RootMode.PAPER_LITERAL, 0.5, 1.0), (RootMode.CONSISTENT, 1.0, 2.0)])
def test_root_constants_by_bisection(mode, a, b):
    root = optimize.bisect(lambda v: a * v * v + b * v - 1.0, 0.0, 1.0, xtol=1e-14)
    assert ROOT_CONSTANT[mode] == pytest.approx(root, abs=1e-12)


def test_doubler_examples():
    assert behav_doubler(0.1, P) == pytest.approx(0.10352762, abs=1e-8)
    assert behav_doubler(-0.1, P) == behav_doubler(0.1, P)
    assert behav_doubler(0.1, P, "consistent") == pytest.approx(0.05857864, abs=1e-8)
    assert DOUBLER_GAIN[RootMode.PAPER_LITERAL] == pytest.approx(1.0352762, abs=1e-7)


@given(st.floats(-0.6, 0.6), st.sampled_from(list(RootMode)))
def test_doubler_even(v, mode):
    assert behav_doubler(v, P, mode) == behav_doubler(-v, P, mode)


@given(st.floats(0, 0.6), st.floats(0, 1))
def test_doubler_homogeneous(v, alpha):
    assert behav_doubler(alpha * v, P) == pytest.approx(alpha * behav_doubler(v, P), rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("mode", list(RootMode))
def test_behavioral_spectrum(mode):
    w = Waveform.sample(lambda t: behav_doubler(0.1 * np.sin(2 * np.pi * 1e3 * t), P, mode), 4e-3, DT)
    r = harmonic_report(w, 1e3, 4)
    gain = DOUBLER_GAIN[mode]
    assert r.mags[1] <= 1e-9 * 0.1
    assert r.mags[2] == pytest.approx(gain * 0.1 * 4 / (3 * math.pi), rel=1e-3)


def test_series_examples():
    g = DOUBLER_GAIN[RootMode.PAPER_LITERAL]
    quarter = 0.25e-3
    for terms in (1, 2, 3):
        assert behav_series_approx(0.1, quarter, 1e3, terms) == pytest.approx(g * 0.1, rel=1e-12)
    assert behav_series_approx(0.1, 0.0, 1e3, 1) == pytest.approx(g * 0.1)
    # binomial 1 - 1/2 - 1/8 at x=-1; printed +1/8 gives 1 - 1/2 + 1/8
    assert behav_series_approx(1.0, 0.0, 1e3, 3) == pytest.approx(g * 0.375)
    assert behav_series_approx(1.0, 0.0, 1e3, 3, paper_signs=True) == pytest.approx(g * 0.625)
    with pytest.raises(ValueError):
        behav_series_approx(1.0, 0.0, 1e3, 4)


@pytest.mark.parametrize("terms", [1, 2, 3])
@pytest.mark.parametrize("paper_signs", [False, True])
def test_series_rms_error_vs_quadrature(terms, paper_signs):
    g = DOUBLER_GAIN[RootMode.PAPER_LITERAL]

    def sq(t):
        exact = g * 0.1 * abs(math.sin(2 * math.pi * t))
        return (behav_series_approx(0.1, t, 1.0, terms, paper_signs) - exact) ** 2

    mean, _ = integrate.quad(sq, 0.0, 1.0, limit=200, epsabs=1e-14)
    assert series_rms_error(0.1, terms, paper_signs) == pytest.approx(math.sqrt(mean), rel=1e-8)


def test_more_terms_help():
    errs = [series_rms_error(0.1, n) for n in (1, 2, 3)]
    assert errs[0] > errs[1] > errs[2]
