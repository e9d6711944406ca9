"""Builders for the four doubler circuits.

Two model sets are bundled: ``table1`` carries the VTO/KP values of the
0.5 um MIETEC cards, ``matched`` is an idealised pair with beta_n = beta_p
and Vtn = -Vtp (the condition under which the inverter output is exactly
``-vin``). All devices are W/L = 1.5u/0.15u on +/-1.5 V rails.

Topology choices the textual description leaves open:

* inverter: PMOS and NMOS drivers share the output node, each loaded by a
  diode-connected device of the opposite type. With matched devices the
  current balance gives ``vout = -vin`` while all four stay saturated.
* squaring pair: two NMOS common-source devices summed into a load resistor;
  the negative-phase gate is driven by an ideal unity inverting VCVS in the
  stand-alone circuit and by the inverter in the full doubler.
* square-rooter: diode-connected M7 stacked on M8, gates tied, M8 in triode.
* doubler: a 0 V source senses the load current, an ideal CCCS copies it into
  the square-rooter, and a DC current source removes the quiescent part.
"""
from __future__ import annotations

import enum
from pathlib import Path

import numpy as np

from .analysis import ChainParams, behav_inverter
from .model import MosGeometry, MosModelCard, MosPolarity, device_k
from .netlist import (Cccs, Circuit, Dc, ISource, Mos, Resistor, Sin, Tran, Vcvs,
                      VSource, emit_netlist, validate_circuit)

VDD = 1.5
VSS = -1.5
W = 1.5e-6
L = 0.15e-6
GEOMETRY = MosGeometry(W, L)
NMOS_MODEL = "cmosn"
PMOS_MODEL = "cmosp"

DEFAULT_RL = 1e3
DEFAULT_SQRT_CURRENT = 50e-6
INPUT_AMPLITUDE = 0.1
INPUT_FREQ = 1e3
TRAN_STEP = 1e-6
TRAN_STOP = 4e-3

# The published cards with '+' continuation markers; only VTO and KP are used.
TABLE1_MODEL_CARDS = """\
.MODEL CMOSN NMOS LEVEL = 3 TOX = 1.4E-8 NSUB = 1E17
+ GAMMA = 0.5483559 PHI = 0.7 VTO = 0.7640855 DELTA = 3.0541177
+ UO = 662.6984452 ETA = 3.162045E-6 THETA = 0.1013999
+ KP = 1.259355E-4 VMAX = 1.442228E5 KAPPA = 0.3 RSH = 7.513418E-3
+ NFS = 1E12 TPG = 1 XJ = 3E-7 LD = 1E-13 WD = 2.334779E-7
+ CGDO = 2.15E-10 CGSO = 2.15E-10 CGBO = 1E-10 CJ = 4.258447E-4
+ PB = 0.9140376 MJ = 0.435903 CJSW = 3.147465E-10 MJSW = 0.1977689

.MODEL CMOSP PMOS LEVEL = 3 TOX = 1.4E-8 NSUB = 1E17
+ GAMMA = 0.6243261 PHI = 0.7 VTO = -0.9444911 DELTA = 0.1118368
+ UO = 250 ETA = 0 THETA = 0.1633973 KP = 3.924644E-5 VMAX = 1E6
+ KAPPA = 30.1015109 RSH = 33.9672594 NFS = 1E12 TPG = -1 XJ = 2E-7
+ LD = 5E-13 WD = 4.11531E-7 CGDO = 2.34E-10 CGSO = 2.34E-10
+ CGBO = 1E-10 CJ = 7.285722E-4 PB = 0.96443 MJ = 0.5
+ CJSW = 2.955161E-10 MJSW = 0.3184873
"""


class ModelSet(enum.Enum):
    TABLE1 = "table1"
    MATCHED = "matched"

    def cards(self) -> dict:
        if self is ModelSet.TABLE1:
            n = MosModelCard(NMOS_MODEL, MosPolarity.NMOS, 0.7640855, 1.259355e-4)
            p = MosModelCard(PMOS_MODEL, MosPolarity.PMOS, -0.9444911, 3.924644e-5)
        else:
            n = MosModelCard(NMOS_MODEL, MosPolarity.NMOS, 0.75, 1e-4)
            p = MosModelCard(PMOS_MODEL, MosPolarity.PMOS, -0.75, 1e-4)
        return {NMOS_MODEL: n, PMOS_MODEL: p}

    @property
    def nmos(self) -> MosModelCard:
        return self.cards()[NMOS_MODEL]

    @property
    def pmos(self) -> MosModelCard:
        return self.cards()[PMOS_MODEL]

    def chain_params(self) -> ChainParams:
        n, p = self.nmos, self.pmos
        kn, kp = device_k(n, GEOMETRY), device_k(p, GEOMETRY)
        return ChainParams(kn, n.vto, VSS, VDD, beta_ratio=kn / kp, vtp=-p.vto)


def _set(models) -> ModelSet:
    return models if isinstance(models, ModelSet) else ModelSet(models)


def _nmos(name, d, g, s, b="vss"):
    return Mos(name, d, g, s, b, NMOS_MODEL, W, L)


def _pmos(name, d, g, s, b="vdd"):
    return Mos(name, d, g, s, b, PMOS_MODEL, W, L)


def _rails():
    return [VSource("vdd", "vdd", "0", Dc(VDD)), VSource("vss", "vss", "0", Dc(VSS))]


def _inverter_devices(inp, out):
    return [
        _pmos("m1", out, inp, "vdd"),
        _nmos("m2", out, inp, "vss"),
        _nmos("m3", out, out, "vss"),
        _pmos("m4", out, out, "vdd"),
    ]


def _finish(elements, models, directives=()) -> Circuit:
    return validate_circuit(Circuit(tuple(elements), _set(models).cards(), tuple(directives)))


def build_inverter(models="matched", vin: float = 0.0) -> Circuit:
    """Four-device inverter; input source ``vin``, output node ``out``."""
    elements = _rails() + [VSource("vin", "in", "0", Dc(vin))] + _inverter_devices("in", "out")
    return _finish(elements, models)


def build_diffamp(models="matched", rl: float = DEFAULT_RL, vin: float = 0.0) -> Circuit:
    """Squaring pair M5/M6 with load ``rl`` from ``vdd`` to node ``d``.

    Gate ``inp`` follows source ``vin``; gate ``inn`` is its mirror image.
    The load current is ``-i(vdd)``.
    """
    if not rl > 0:
        raise ValueError("rl must be positive")
    elements = _rails() + [
        VSource("vin", "inp", "0", Dc(vin)),
        Vcvs("eneg", "inn", "0", "inp", "0", -1.0),
        _nmos("m5", "d", "inp", "vss"),
        _nmos("m6", "d", "inn", "vss"),
        Resistor("rl", "vdd", "d", rl),
    ]
    return _finish(elements, models)


def build_sqrt(models="matched", i_in: float = DEFAULT_SQRT_CURRENT) -> Circuit:
    """Square-rooter driven by current source ``iin`` into node ``g``; output ``o``."""
    elements = [
        ISource("iin", "0", "g", i_in),
        _nmos("m7", "g", "g", "o", "0"),
        _nmos("m8", "o", "g", "0", "0"),
    ]
    return _finish(elements, models)


def quiescent_current(models="matched", amplitude: float = INPUT_AMPLITUDE) -> float:
    """DC current to subtract from the sensed load current before square-rooting.

    Matched sets use ``2K(Vss + Vt)^2``. Otherwise the inverter is not an
    exact mirror and the pair current is not even in ``vin``; the minimum of
    the square-law estimate over the input swing is used (less 1 ppm) so the
    square-rooter never sees a negative current.
    """
    ms = _set(models)
    n, p = ms.nmos, ms.pmos
    kn = device_k(n, GEOMETRY)
    if device_k(p, GEOMETRY) == kn and p.vto == -n.vto:
        return 2.0 * kn * (VSS + n.vto) ** 2
    params = ms.chain_params()
    v = np.linspace(-amplitude, amplitude, 2001)
    u = behav_inverter(v, params)
    b = -VSS - n.vto
    pair = kn * (np.maximum(v + b, 0.0) ** 2 + np.maximum(u + b, 0.0) ** 2)
    return float(pair.min()) * (1.0 - 1e-6)


def build_doubler(models="matched", amplitude: float = INPUT_AMPLITUDE, freq: float = INPUT_FREQ,
                  tstep: float = TRAN_STEP, tstop: float = TRAN_STOP, rl: float = DEFAULT_RL) -> Circuit:
    """Full chain driven by ``amplitude*sin(2*pi*freq*t)``; output node ``out``."""
    elements = _rails() + [VSource("vin", "in", "0", Sin(0.0, amplitude, freq))]
    elements += _inverter_devices("in", "inv")
    elements += [
        _nmos("m5", "d", "in", "vss"),
        _nmos("m6", "d", "inv", "vss"),
        Resistor("rl", "vdd", "r", rl),
        VSource("vsense", "r", "d", Dc(0.0)),
        Cccs("fcopy", "0", "g", "vsense", 1.0),
        ISource("iq", "g", "0", quiescent_current(models, amplitude)),
        _nmos("m7", "g", "g", "out"),
        _nmos("m8", "out", "g", "0"),
    ]
    return _finish(elements, models, [Tran(tstep, tstop)])


BUILDERS = {
    "inverter": build_inverter,
    "diffamp": build_diffamp,
    "sqrt": build_sqrt,
    "doubler": build_doubler,
}


def export_netlist(circuit: Circuit, path) -> Path:
    """Write ``emit_netlist(circuit)`` to ``path`` byte for byte."""
    path = Path(path)
    path.write_bytes(emit_netlist(circuit).encode("ascii"))
    return path
