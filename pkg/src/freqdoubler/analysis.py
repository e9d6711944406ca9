"""Waveform post-processing and the closed-form model of the doubler chain.

The behavioral chain is inverter -> squaring pair -> square-rooter. The
square-rooter comes in two flavours: ``paper-literal`` uses the triode law
``K[(Vgs-Vt)Vds - Vds^2/2]`` and lands on the constant sqrt(3)-1 = 0.732;
``consistent`` uses the boundary-continuous triode law of :mod:`.model` and
lands on sqrt(2)-1 = 0.414, which is what the transistor-level circuit does.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass

import numpy as np

from . import kernels

# relative tolerance on "integer number of periods in the window"
CYCLE_TOL = 1e-3
RATIO_EPS = 1e-15


class AnalysisError(ValueError):
    pass


class RootMode(enum.Enum):
    PAPER_LITERAL = "paper-literal"
    CONSISTENT = "consistent"


def _root_of(a: float, b: float, c: float) -> float:
    # positive root of a v^2 + b v - c = 0 (a, b, c > 0), cancellation-free
    return 2.0 * c / (b + math.sqrt(b * b + 4.0 * a * c))


# Square-rooter constants from the M7/M8 current balance with I = K = 1:
#   paper-literal: V^2/2 + V - 1 = 0
#   consistent:    V^2   + 2V - 1 = 0
ROOT_CONSTANT = {
    RootMode.PAPER_LITERAL: _root_of(0.5, 1.0, 1.0),
    RootMode.CONSISTENT: _root_of(1.0, 2.0, 1.0),
}
DOUBLER_GAIN = {mode: c * math.sqrt(2.0) for mode, c in ROOT_CONSTANT.items()}


@dataclass(frozen=True, eq=False)
class Waveform:
    t0: float
    dt: float
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if not self.dt > 0:
            raise AnalysisError(f"dt must be positive, got {self.dt}")
        if samples.ndim != 1 or samples.size < 2:
            raise AnalysisError("a waveform needs at least 2 samples")
        object.__setattr__(self, "samples", samples)

    @classmethod
    def sample(cls, func, duration: float, dt: float, t0: float = 0.0) -> "Waveform":
        """Sample ``func`` on ``[t0, t0 + duration)`` (end point excluded)."""
        n = int(round(duration / dt))
        t = t0 + dt * np.arange(n)
        return cls(t0, dt, np.asarray(func(t), dtype=float))

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)

    def __len__(self):
        return self.samples.size


def _window(w: Waveform, f: float) -> np.ndarray:
    """Samples spanning a whole number of periods of ``f``.

    A closed-interval record (last sample repeats the phase of the first) is
    trimmed by one sample.
    """
    x = w.samples
    best = None
    for n in (x.size, x.size - 1):
        cycles = n * w.dt * f
        miss = abs(cycles - round(cycles))
        if n >= 2 and round(cycles) >= 1 and miss <= CYCLE_TOL * cycles:
            if best is None or miss < best[1]:
                best = (n, miss)
    if best is not None:
        return x[:best[0]]
    raise AnalysisError(f"window of {x.size} samples at dt={w.dt} does not hold an integer number of {f} Hz periods")


def goertzel(w: Waveform, f: float):
    """Amplitude and phase of the ``f`` component of ``w``.

    Scaled so ``A*sin(2*pi*f*t)`` returns ``(A, -pi/2)``; the phase is that of
    a cosine reference.
    """
    if not f > 0:
        raise AnalysisError(f"frequency must be positive, got {f}")
    if f >= 0.5 / w.dt:
        raise AnalysisError(f"{f} Hz is at or above Nyquist ({0.5 / w.dt} Hz)")
    x = _window(w, f)
    n = x.size
    k = round(n * w.dt * f)
    re, im = kernels.goertzel_bin(x, 2.0 * math.pi * k / n)
    return 2.0 * math.hypot(re, im) / n, math.atan2(im, re)


@dataclass(frozen=True, eq=False)
class HarmonicReport:
    f0: float
    dc: float
    # mags[k] is the amplitude at k*f0; mags[0] holds |dc| so indices match harmonic numbers
    mags: np.ndarray
    phases: np.ndarray
    thd: float
    doubling_ratio: float

    @property
    def n(self) -> int:
        return self.mags.size - 1

    def rows(self):
        return [(k, k * self.f0, float(self.mags[k])) for k in range(1, self.n + 1)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["k", "freq_hz", "magnitude_v"])
        for k, f, m in self.rows():
            writer.writerow([k, repr(float(f)), repr(m)])
        return buf.getvalue()


def harmonic_report(w: Waveform, f0: float, n: int) -> HarmonicReport:
    if n < 2:
        raise AnalysisError("need at least 2 harmonics for a doubling ratio")
    mags = np.zeros(n + 1)
    phases = np.zeros(n + 1)
    for k in range(1, n + 1):
        mags[k], phases[k] = goertzel(w, k * f0)
    dc = float(np.mean(_window(w, f0)))
    mags[0] = abs(dc)
    ac = mags[1:]
    top = float(ac.max())
    thd = math.sqrt(max(float(np.sum(ac ** 2)) - top * top, 0.0)) / top if top > 0 else 0.0
    return HarmonicReport(f0, dc, mags, phases, thd, float(mags[2] / max(mags[1], RATIO_EPS)))


def estimate_period(w: Waveform) -> float:
    """Mean spacing of upward crossings of the waveform's mean level."""
    x = w.samples - w.samples.mean()
    idx = np.nonzero((x[:-1] < 0) & (x[1:] >= 0))[0]
    if idx.size < 2:
        raise AnalysisError("fewer than two upward mean crossings")
    frac = -x[idx] / (x[idx + 1] - x[idx])
    crossings = (idx + frac) * w.dt
    return float(np.mean(np.diff(crossings)))


# --------------------------------------------------------------------------
# behavioral chain


@dataclass(frozen=True)
class ChainParams:
    k: float
    vt: float
    vss: float = -1.5
    vdd: float = 1.5
    beta_ratio: float = 1.0
    # PMOS threshold magnitude; defaults to vt
    vtp: float | None = None

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("k must be positive")
        if not self.vss < 0 < self.vdd:
            raise ValueError("need vss < 0 < vdd")
        if not self.beta_ratio > 0:
            raise ValueError("beta_ratio must be positive")

    @property
    def pmos_vt(self) -> float:
        return self.vt if self.vtp is None else self.vtp

    @property
    def headroom(self) -> float:
        """Largest |gate voltage| keeping both squaring devices in saturation."""
        return -self.vss - self.vt


def _mode(mode) -> RootMode:
    return mode if isinstance(mode, RootMode) else RootMode(mode)


def behav_inverter(vin, p: ChainParams):
    """Output of the complementary diode-loaded inverter, all devices saturated.

    ``p.beta_ratio`` is beta_n/beta_p. Matched devices (equal betas and
    threshold magnitudes) on symmetric rails give exactly ``-vin``.
    """
    vin = np.asarray(vin, dtype=float)
    a = p.vdd - p.pmos_vt
    b = -p.vss - p.vt
    rho = p.beta_ratio
    if rho == 1.0:
        out = -vin if a == b else (a - b) - vin
    else:
        c = (a - vin) ** 2 + a * a - rho * ((b + vin) ** 2 + b * b)
        big = a + rho * b
        out = c / (big + np.sqrt(big * big - (1.0 - rho) * c))
    return out[()] if out.ndim == 0 else out


def _check_saturated(v, p: ChainParams):
    v = np.asarray(v)
    if np.any(np.abs(v) >= p.headroom):
        raise AnalysisError(f"|v| must stay below {p.headroom:.6g} V for the squaring pair to stay saturated")


def behav_diffamp_current(vin, p: ChainParams, dc_removed: bool = False):
    """Summed drain current of the squaring pair driven by ``vin`` and ``-vin``."""
    _check_saturated(vin, p)
    vin = np.asarray(vin, dtype=float)
    i = 2.0 * p.k * vin * vin
    if not dc_removed:
        i = i + 2.0 * p.k * (p.vss + p.vt) ** 2
    return i[()] if i.ndim == 0 else i


def behav_sqrt(i, k: float, mode="paper-literal"):
    """Square-rooter output voltage for input current ``i``."""
    i = np.asarray(i, dtype=float)
    if np.any(i < 0):
        raise AnalysisError("square-rooter input current must be non-negative")
    if not k > 0:
        raise AnalysisError("k must be positive")
    v = ROOT_CONSTANT[_mode(mode)] * np.sqrt(i / k)
    return v[()] if v.ndim == 0 else v


def behav_doubler(vin, p: ChainParams, mode="paper-literal"):
    """Inverter -> squaring pair (quiescent current removed) -> square-rooter."""
    vin = np.asarray(vin, dtype=float)
    vinv = np.asarray(behav_inverter(vin, p))
    _check_saturated(vin, p)
    _check_saturated(vinv, p)
    b = -p.vss - p.vt
    # k(vin+b)^2 + k(vinv+b)^2 - 2kb^2 without the large cancelling terms
    i = p.k * (vin * vin + vinv * vinv) + 2.0 * p.k * b * (vin + vinv)
    return behav_sqrt(i, p.k, mode)


_SERIES_COEFFS = (1.0, 0.5, -0.125)


def _series_coeffs(terms: int, paper_signs: bool):
    if terms not in (1, 2, 3):
        raise ValueError("terms must be 1, 2 or 3")
    coeffs = list(_SERIES_COEFFS[:terms])
    if paper_signs and terms == 3:
        coeffs[2] = 0.125
    return coeffs


def behav_series_approx(vm, t, f0: float, terms: int, paper_signs: bool = False):
    """Doubler output (paper-literal gain) with sqrt(1 - cos^2) replaced by a truncated binomial series.

    ``paper_signs`` uses +1/8 for the quadratic coefficient as printed in the
    source derivation instead of the binomial -1/8.
    """
    coeffs = _series_coeffs(terms, paper_signs)
    c = np.cos(2.0 * np.pi * f0 * np.asarray(t, dtype=float))
    x = -c * c
    acc = np.zeros_like(x)
    for j, a in enumerate(coeffs):
        acc = acc + a * x ** j
    out = DOUBLER_GAIN[RootMode.PAPER_LITERAL] * vm * acc
    return out[()] if out.ndim == 0 else out


def _abs_sin_moment(n: int) -> float:
    # mean of |sin|^n over a period
    m = 1.0
    for j in range(n - 1, 0, -2):
        m *= j / (j + 1)
    return m if n % 2 == 0 else m * 2.0 / math.pi


def series_rms_error(vm: float, terms: int, paper_signs: bool = False) -> float:
    """RMS gap between the truncated series and the exact ``gain*vm*|sin|`` over a period.

    Closed form: the error is a polynomial in |sin|, whose even/odd moments
    are known exactly.
    """
    coeffs = _series_coeffs(terms, paper_signs)
    P = np.polynomial.Polynomial
    x = P([-1.0, 0.0, 1.0])  # -cos^2 = s^2 - 1
    approx = sum((a * x ** j for j, a in enumerate(coeffs)), P([0.0]))
    err2 = (P([0.0, 1.0]) - approx) ** 2
    mean = sum(c * _abs_sin_moment(n) for n, c in enumerate(err2.coef))
    return DOUBLER_GAIN[RootMode.PAPER_LITERAL] * abs(vm) * math.sqrt(max(mean, 0.0))
