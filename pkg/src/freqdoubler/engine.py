"""Modified nodal analysis with damped Newton-Raphson.

Unknowns are the non-ground node voltages followed by one branch current
per voltage source and per VCVS. A voltage source's branch current is
positive when it flows from ``n+`` through the source to ``n-``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .analysis import Waveform
from .model import MosGeometry, device_k, mos_eval
from .netlist import (Capacitor, Cccs, Circuit, ISource, Mos, Resistor, Sin, Vcvs,
                      VSource, validate_circuit)

log = logging.getLogger(__name__)

PIVOT_REL_TOL = 1e-13


class SingularMatrixError(ArithmeticError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"matrix is singular at pivot {index}")


class SingularCircuitError(ArithmeticError):
    pass


class ConvergenceError(ArithmeticError):
    def __init__(self, message, op=None, time=None, node=None):
        self.op = op
        self.time = time
        self.node = node
        super().__init__(message)


def linear_solve(matrix, rhs) -> np.ndarray:
    """Solve ``matrix @ x = rhs`` by dense LU with partial pivoting."""
    a = np.array(matrix, dtype=float)
    b = np.array(rhs, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or b.shape != (a.shape[0],):
        raise ValueError(f"need a square system, got {a.shape} and {b.shape}")
    perm, bad = kernels.lu_factor(a, PIVOT_REL_TOL)
    if bad >= 0:
        raise SingularMatrixError(int(bad))
    return kernels.lu_solve(a, perm, b)


@dataclass(frozen=True)
class NewtonOptions:
    max_iter: int = 100
    abstol: float = 1e-12
    reltol: float = 1e-6
    vntol: float = 1e-9
    gmin: float = 1e-12
    damping: float = 0.5

    def __post_init__(self):
        for name in ("max_iter", "abstol", "reltol", "vntol", "gmin", "damping"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.reltol < 1:
            raise ValueError("reltol must be below 1")


@dataclass(frozen=True)
class TranOptions:
    tstep: float
    tstop: float
    integrator: str = "trapezoidal"
    # start from an all-zero state instead of the t=0 operating point
    uic: bool = False

    def __post_init__(self):
        if not (0 < self.tstep < self.tstop):
            raise ValueError("need 0 < tstep < tstop")
        if self.integrator not in ("trapezoidal", "backward-euler"):
            raise ValueError(f"unknown integrator {self.integrator!r}")


@dataclass(frozen=True, eq=False)
class OperatingPoint:
    node_voltages: dict
    source_currents: dict
    iterations: int
    converged: bool
    strategy: str = "newton"
    diagnostic: str = ""
    x: np.ndarray = field(default=None, repr=False)

    def v(self, node: str) -> float:
        return self.node_voltages[node.lower()]

    def i(self, source: str) -> float:
        return self.source_currents[source.lower()]


def _ints(values):
    return np.asarray(values, dtype=np.int64).reshape(-1)


def _floats(values):
    return np.asarray(values, dtype=np.float64).reshape(-1)


class _Compiled:
    """Array form of a validated circuit, ready for the assembly kernel."""

    def __init__(self, circuit: Circuit):
        if circuit.elements and not circuit.nodes:
            circuit = validate_circuit(circuit)
        self.circuit = circuit
        idx = circuit.node_index()
        self.node_names = [n for n in circuit.nodes[1:]]
        self.n_nodes = len(self.node_names)

        res = circuit.of_type(Resistor)
        self.r_a = _ints([idx[e.n1] for e in res])
        self.r_b = _ints([idx[e.n2] for e in res])
        self.r_g = _floats([1.0 / e.ohms for e in res])

        caps = circuit.of_type(Capacitor)
        self.caps = caps
        self.c_a = _ints([idx[e.n1] for e in caps])
        self.c_b = _ints([idx[e.n2] for e in caps])
        self.c_val = _floats([e.farads for e in caps])

        self.vsrc = circuit.of_type(VSource)
        self.v_p = _ints([idx[e.npos] for e in self.vsrc])
        self.v_n = _ints([idx[e.nneg] for e in self.vsrc])

        self.isrc = circuit.of_type(ISource)
        self.i_p = _ints([idx[e.npos] for e in self.isrc])
        self.i_n = _ints([idx[e.nneg] for e in self.isrc])
        self.i_val = _floats([e.amps for e in self.isrc])

        mos = circuit.of_type(Mos)
        cards = [circuit.models[m.model] for m in mos]
        self.m_d = _ints([idx[m.drain] for m in mos])
        self.m_g = _ints([idx[m.gate] for m in mos])
        self.m_s = _ints([idx[m.source] for m in mos])
        self.m_pol = _floats([c.polarity.sign for c in cards])
        self.m_k = _floats([device_k(c, MosGeometry(m.w, m.l)) for m, c in zip(mos, cards)])
        self.m_vto = _floats([c.vto for c in cards])
        self.m_lam = _floats([c.lam for c in cards])

        vcvs = circuit.of_type(Vcvs)
        self.e_p = _ints([idx[e.npos] for e in vcvs])
        self.e_n = _ints([idx[e.nneg] for e in vcvs])
        self.e_cp = _ints([idx[e.cpos] for e in vcvs])
        self.e_cn = _ints([idx[e.cneg] for e in vcvs])
        self.e_gain = _floats([e.gain for e in vcvs])

        vpos = {e.name: j for j, e in enumerate(self.vsrc)}
        cccs = circuit.of_type(Cccs)
        self.f_p = _ints([idx[e.npos] for e in cccs])
        self.f_n = _ints([idx[e.nneg] for e in cccs])
        self.f_ctrl = _ints([vpos[e.control] for e in cccs])
        self.f_gain = _floats([e.gain for e in cccs])

        self.branch_names = [e.name for e in self.vsrc] + [e.name for e in vcvs]
        self.size = self.n_nodes + len(self.branch_names)
        self.nonlinear = len(mos) > 0

    def unknown_name(self, k: int) -> str:
        if k < self.n_nodes:
            return f"v({self.node_names[k]})"
        return f"i({self.branch_names[k - self.n_nodes]})"

    def source_values(self, t: float) -> np.ndarray:
        return _floats([e.wave.value(t) for e in self.vsrc])

    def source_table(self, times: np.ndarray) -> np.ndarray:
        cols = []
        for e in self.vsrc:
            w = e.wave
            if isinstance(w, Sin):
                cols.append(w.offset + w.amplitude * np.sin(2.0 * np.pi * w.freq * times))
            else:
                cols.append(np.full(times.shape, w.volts))
        return np.column_stack(cols) if cols else np.zeros((times.size, 0))

    def op_from(self, x, iterations, converged, strategy="newton", diagnostic=""):
        nv = {"0": 0.0}
        nv.update({n: float(x[i]) for i, n in enumerate(self.node_names)})
        sc = {n: float(x[self.n_nodes + j]) for j, n in enumerate(self.branch_names)}
        return OperatingPoint(nv, sc, iterations, converged, strategy, diagnostic, x.copy())


@dataclass
class _Newton:
    """Workspace for repeated Newton solves on one compiled circuit."""

    cc: _Compiled
    opts: NewtonOptions
    c_geq: np.ndarray = None
    c_hist: np.ndarray = None

    def __post_init__(self):
        n = self.cc.size
        self.jac = np.zeros((n, n))
        self.res = np.zeros(n)
        self.scale = np.zeros(n)
        ncap = self.cc.c_a.size
        if self.c_geq is None:
            self.c_geq = np.zeros(ncap)
            self.c_hist = np.zeros(ncap)

    def assemble(self, x, v_val, i_val, gmin):
        cc = self.cc
        kernels.assemble(x, cc.n_nodes,
                         cc.r_a, cc.r_b, cc.r_g,
                         cc.c_a, cc.c_b, self.c_geq, self.c_hist,
                         cc.v_p, cc.v_n, v_val,
                         cc.i_p, cc.i_n, i_val,
                         cc.m_d, cc.m_g, cc.m_s, cc.m_pol, cc.m_k, cc.m_vto, cc.m_lam,
                         cc.e_p, cc.e_n, cc.e_cp, cc.e_cn, cc.e_gain,
                         cc.f_p, cc.f_n, cc.f_ctrl, cc.f_gain,
                         gmin, self.jac, self.res, self.scale)

    def kcl_bound(self):
        nn = self.cc.n_nodes
        return self.opts.abstol + self.opts.reltol * self.scale[:nn]

    def worst_node(self):
        nn = self.cc.n_nodes
        if nn == 0:
            return None, 0.0
        ratio = np.abs(self.res[:nn]) / self.kcl_bound()
        k = int(np.argmax(ratio))
        return self.cc.node_names[k], float(self.res[k])

    def solve(self, x, v_val, i_val, gmin):
        """Damped Newton from ``x`` (modified in place). Returns ``(iterations, converged)``.

        ``iterations`` counts the updates applied before the convergence test
        passed; a linear circuit therefore reports 1.
        """
        cc, o = self.cc, self.opts
        nn = cc.n_nodes
        for it in range(o.max_iter + 1):
            self.assemble(x, v_val, i_val, gmin)
            kcl_ok = bool(np.all(np.abs(self.res[:nn]) <= self.kcl_bound()))
            perm, bad = kernels.lu_factor(self.jac, PIVOT_REL_TOL)
            if bad >= 0:
                name = cc.unknown_name(int(bad))
                hint = " (floating node?)" if bad < nn else ""
                raise SingularCircuitError(f"singular MNA matrix at {name}{hint}")
            dx = kernels.lu_solve(self.jac, perm, -self.res)
            dv = dx[:nn]
            di = dx[nn:]
            delta_ok = (bool(np.all(np.abs(dv) <= o.vntol + o.reltol * np.abs(x[:nn])))
                        and bool(np.all(np.abs(di) <= o.abstol + o.reltol * np.abs(x[nn:]))))
            if kcl_ok and delta_ok:
                x += dx
                return it, True
            if it == o.max_iter:
                break
            if cc.nonlinear:
                np.clip(dv, -o.damping, o.damping, out=dv)
            x += dx
        return o.max_iter, False


def _gmin_for(cc: _Compiled, opts: NewtonOptions) -> float:
    # linear circuits are solved exactly, without the shunt
    return opts.gmin if cc.nonlinear else 0.0


def _solve_point(nw: _Newton, x0, v_val, i_val):
    """Newton, then gmin stepping, then source stepping. Returns an OperatingPoint."""
    cc, opts = nw.cc, nw.opts
    gmin = _gmin_for(cc, opts)
    x = np.array(x0, dtype=float)
    iters, ok = nw.solve(x, v_val, i_val, gmin)
    if ok:
        return cc.op_from(x, iters, True)
    total = iters

    if cc.nonlinear:
        log.debug("newton failed, trying gmin stepping")
        x = np.array(x0, dtype=float)
        ok = True
        for decade in range(6, -1, -1):
            it, ok = nw.solve(x, v_val, i_val, gmin * 10.0 ** decade)
            total += it
            if not ok:
                break
        if ok:
            return cc.op_from(x, total, True, "gmin-stepping")

    log.debug("trying source stepping")
    x = np.zeros(cc.size)
    ok = True
    for step in range(1, 11):
        s = step / 10.0
        it, ok = nw.solve(x, v_val * s, i_val * s, gmin)
        total += it
        if not ok:
            break
    if ok:
        return cc.op_from(x, total, True, "source-stepping")

    node, r = nw.worst_node()
    msg = f"no convergence after newton, gmin and source stepping; worst KCL residual {r:.3g} A at node {node}"
    return cc.op_from(x, total, False, "failed", msg)


def solve_dc(circuit: Circuit, options: NewtonOptions | None = None, x0=None) -> OperatingPoint:
    """DC operating point (capacitors open, sources at their t=0 values)."""
    cc = _Compiled(circuit)
    nw = _Newton(cc, options or NewtonOptions())
    start = np.zeros(cc.size) if x0 is None else x0
    op = _solve_point(nw, start, cc.source_values(0.0), cc.i_val)
    if not op.converged:
        raise ConvergenceError(op.diagnostic, op=op)
    return op


@dataclass(frozen=True, eq=False)
class SweepResult:
    source: str
    values: np.ndarray
    points: list

    def voltage(self, node: str) -> np.ndarray:
        return np.array([p.v(node) for p in self.points])

    @property
    def converged(self) -> np.ndarray:
        return np.array([p.converged for p in self.points])


def _sweep_values(start, stop, step):
    if not step > 0:
        raise ValueError("sweep step must be positive")
    n = int(math.floor(abs(stop - start) / step + 1e-9)) + 1
    sign = 1.0 if stop >= start else -1.0
    return start + sign * step * np.arange(n)


def dc_sweep(circuit: Circuit, source: str, start: float, stop: float, step: float,
             options: NewtonOptions | None = None) -> SweepResult:
    """Sweep a DC voltage or current source, warm-starting each point from the last.

    Non-convergent points are kept, with ``converged`` False.
    """
    cc = _Compiled(circuit)
    nw = _Newton(cc, options or NewtonOptions())
    source = source.lower()
    vnames = [e.name for e in cc.vsrc]
    inames = [e.name for e in cc.isrc]
    if source not in vnames and source not in inames:
        raise KeyError(f"unknown source {source}")
    v_val = cc.source_values(0.0)
    i_val = cc.i_val.copy()
    x = np.zeros(cc.size)
    values = _sweep_values(start, stop, step)
    points = []
    for value in values:
        if source in vnames:
            v_val[vnames.index(source)] = value
        else:
            i_val[inames.index(source)] = value
        op = _solve_point(nw, x, v_val, i_val)
        if op.converged:
            x = op.x.copy()
        else:
            log.warning("sweep %s=%g did not converge: %s", source, value, op.diagnostic)
        points.append(op)
    return SweepResult(source, values, points)


@dataclass(frozen=True, eq=False)
class TransientResult:
    time: np.ndarray
    node_names: list
    branch_names: list
    x: np.ndarray  # (steps + 1, unknowns)
    tstep: float

    def voltage(self, node: str) -> np.ndarray:
        node = node.lower()
        if node == "0":
            return np.zeros(self.time.size)
        return self.x[:, self.node_names.index(node)]

    def current(self, source: str) -> np.ndarray:
        return self.x[:, len(self.node_names) + self.branch_names.index(source.lower())]

    def waveform(self, node: str) -> Waveform:
        return Waveform(float(self.time[0]), self.tstep, self.voltage(node))

    def waveforms(self) -> dict:
        return {n: self.waveform(n) for n in self.node_names}


def solve_tran(circuit: Circuit, options: TranOptions,
               newton: NewtonOptions | None = None) -> TransientResult:
    """Fixed-step transient. Samples run from t=0 to tstop inclusive."""
    cc = _Compiled(circuit)
    nopts = newton or NewtonOptions()
    h = options.tstep
    steps = int(round(options.tstop / h))
    times = h * np.arange(steps + 1)
    vtab = cc.source_table(times)
    nw = _Newton(cc, nopts)
    gmin = _gmin_for(cc, nopts)
    out = np.zeros((steps + 1, cc.size))

    if options.uic:
        x = np.zeros(cc.size)
    else:
        op = _solve_point(nw, np.zeros(cc.size), vtab[0], cc.i_val)
        if not op.converged:
            raise ConvergenceError(f"t=0: {op.diagnostic}", op=op, time=0.0)
        x = op.x.copy()
    out[0] = x

    def vcap(x):
        va = np.where(cc.c_a > 0, x[np.maximum(cc.c_a - 1, 0)], 0.0)
        vb = np.where(cc.c_b > 0, x[np.maximum(cc.c_b - 1, 0)], 0.0)
        return va - vb

    vc = vcap(x)
    ic = np.zeros(cc.c_a.size)
    trap = options.integrator == "trapezoidal"
    for n in range(1, steps + 1):
        # the first step after a UIC start has no consistent capacitor current
        if trap and not (options.uic and n == 1):
            nw.c_geq = 2.0 * cc.c_val / h
            nw.c_hist = nw.c_geq * vc + ic
        else:
            nw.c_geq = cc.c_val / h
            nw.c_hist = nw.c_geq * vc
        prev = x.copy()
        _, ok = nw.solve(x, vtab[n], cc.i_val, gmin)
        if not ok:
            x = prev
            for decade in range(6, -1, -1):
                _, ok = nw.solve(x, vtab[n], cc.i_val, gmin * 10.0 ** decade)
                if not ok:
                    break
        if not ok:
            node, r = nw.worst_node()
            raise ConvergenceError(
                f"transient step failed at t={times[n]:.6g} s; worst KCL residual {r:.3g} A at node {node}",
                time=float(times[n]), node=node)
        vc = vcap(x)
        ic = nw.c_geq * vc - nw.c_hist
        out[n] = x
    return TransientResult(times, list(cc.node_names), list(cc.branch_names), out, h)


def kcl_residuals(circuit: Circuit, op: OperatingPoint, options: NewtonOptions | None = None):
    """Per-node KCL residual and current scale, recomputed element by element.

    Independent of the assembly kernel; capacitors are open. Returns
    ``{node: (residual, scale)}`` where residual is the net current leaving.
    """
    opts = options or NewtonOptions()
    v = op.node_voltages
    nodes = [n for n in circuit.nodes if n != "0"]
    acc = {n: [0.0, 0.0] for n in nodes}

    def flow(a, b, i):
        for n, s in ((a, i), (b, -i)):
            if n != "0":
                acc[n][0] += s
                acc[n][1] += abs(s)

    nonlinear = False
    for e in circuit.elements:
        if isinstance(e, Resistor):
            flow(e.n1, e.n2, (v[e.n1] - v[e.n2]) / e.ohms)
        elif isinstance(e, (VSource, Vcvs)):
            flow(e.npos, e.nneg, op.source_currents[e.name])
        elif isinstance(e, ISource):
            flow(e.npos, e.nneg, e.amps)
        elif isinstance(e, Cccs):
            flow(e.npos, e.nneg, e.gain * op.source_currents[e.control])
        elif isinstance(e, Mos):
            nonlinear = True
            card = circuit.models[e.model]
            geom = MosGeometry(e.w, e.l)
            vd, vg, vs = v[e.drain], v[e.gate], v[e.source]
            if card.polarity.sign * (vd - vs) >= 0:
                ids = mos_eval(card, geom, vg - vs, vd - vs).id
            else:
                ids = -mos_eval(card, geom, vg - vd, vs - vd).id
            flow(e.drain, e.source, ids)
    if nonlinear:
        for n in nodes:
            flow(n, "0", opts.gmin * v[n])
    return {n: (r, s) for n, (r, s) in acc.items()}
