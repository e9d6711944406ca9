"""SPICE-flavoured netlist reader and writer.

Supported cards::

    Mname d g s b model [W=val] [L=val]
    Rname n1 n2 val
    Cname n1 n2 val
    Vname n+ n- [DC] val | SIN(offset amplitude freq)
    Iname n+ n- [DC] val
    Ename n+ n- nc+ nc- gain        voltage-controlled voltage source
    Fname n+ n- vname gain          current-controlled current source
    .model name NMOS|PMOS [(] key=val ... [)]
    .op
    .dc src start stop step
    .tran tstep tstop [UIC]
    .end

Everything is case-insensitive and stored lowercase. ``*`` starts a comment
line, ``;`` an inline comment, ``+`` continues the previous card.
"""
from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Union

from .model import MosModelCard, MosPolarity

GROUND = "0"

_SUFFIXES = {
    "f": 1e-15,
    "p": 1e-12,
    "n": 1e-9,
    "u": 1e-6,
    "m": 1e-3,
    "k": 1e3,
    "g": 1e9,
}
_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_TOKEN = re.compile(r"[^\s(),=]+|=")

DEFAULT_W = 1e-6
DEFAULT_L = 1e-6


class ValueParseError(ValueError):
    def __init__(self, token: str, column: int, reason: str = "malformed number"):
        self.token = token
        self.column = column
        super().__init__(f"{reason} {token!r} at column {column}")


@dataclass(frozen=True)
class Diagnostic:
    line: int | None
    message: str

    def __str__(self):
        if self.line is None:
            return self.message
        return f"line {self.line}: {self.message}"


class NetlistError(Exception):
    """Raised with every problem found in a netlist, not just the first."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(str(e) for e in self.errors))


def parse_value(token: str) -> float:
    """Parse a number with an optional engineering suffix (``1.5u``, ``2meg``).

    Letters following the suffix are treated as units and ignored.
    """
    m = _NUMBER.match(token)
    if m is None:
        raise ValueParseError(token, 1)
    tail = token[m.end():]
    if tail and not tail.isalpha():
        col = m.end() + 1
        while col <= len(token) and token[col - 1].isalpha():
            col += 1
        raise ValueParseError(token, col)
    value = float(m.group())
    tail = tail.lower()
    if tail.startswith("meg"):
        value *= 1e6
    elif tail and tail[0] in _SUFFIXES:
        value *= _SUFFIXES[tail[0]]
    return value


# --------------------------------------------------------------------------
# data model


@dataclass(frozen=True)
class Mos:
    name: str
    drain: str
    gate: str
    source: str
    bulk: str
    model: str
    w: float = DEFAULT_W
    l: float = DEFAULT_L

    @property
    def nodes(self):
        return (self.drain, self.gate, self.source, self.bulk)


@dataclass(frozen=True)
class Resistor:
    name: str
    n1: str
    n2: str
    ohms: float

    @property
    def nodes(self):
        return (self.n1, self.n2)


@dataclass(frozen=True)
class Capacitor:
    name: str
    n1: str
    n2: str
    farads: float

    @property
    def nodes(self):
        return (self.n1, self.n2)


@dataclass(frozen=True)
class Dc:
    volts: float

    def value(self, t: float) -> float:
        return self.volts


@dataclass(frozen=True)
class Sin:
    offset: float
    amplitude: float
    freq: float

    def value(self, t: float) -> float:
        return self.offset + self.amplitude * math.sin(2.0 * math.pi * self.freq * t)


@dataclass(frozen=True)
class VSource:
    name: str
    npos: str
    nneg: str
    wave: Union[Dc, Sin]

    @property
    def nodes(self):
        return (self.npos, self.nneg)


@dataclass(frozen=True)
class ISource:
    name: str
    npos: str
    nneg: str
    amps: float

    @property
    def nodes(self):
        return (self.npos, self.nneg)


@dataclass(frozen=True)
class Vcvs:
    name: str
    npos: str
    nneg: str
    cpos: str
    cneg: str
    gain: float

    @property
    def nodes(self):
        return (self.npos, self.nneg, self.cpos, self.cneg)


@dataclass(frozen=True)
class Cccs:
    name: str
    npos: str
    nneg: str
    control: str
    gain: float

    @property
    def nodes(self):
        return (self.npos, self.nneg)


Element = Union[Mos, Resistor, Capacitor, VSource, ISource, Vcvs, Cccs]


@dataclass(frozen=True)
class Op:
    pass


@dataclass(frozen=True)
class DcSweep:
    source: str
    start: float
    stop: float
    step: float


@dataclass(frozen=True)
class Tran:
    tstep: float
    tstop: float
    uic: bool = False


Directive = Union[Op, DcSweep, Tran]


@dataclass(frozen=True)
class Circuit:
    elements: tuple = ()
    models: Mapping[str, MosModelCard] = field(default_factory=dict)
    directives: tuple = ()
    # filled by validate_circuit; ground first
    nodes: tuple = ()
    warnings: tuple = field(default=(), compare=False)
    source_lines: Mapping[str, int] = field(default_factory=dict, compare=False, repr=False)

    @property
    def validated(self) -> bool:
        return bool(self.nodes) or not self.elements

    def element(self, name: str):
        name = name.lower()
        for e in self.elements:
            if e.name == name:
                return e
        raise KeyError(name)

    def of_type(self, kind):
        return [e for e in self.elements if isinstance(e, kind)]

    def node_index(self) -> dict:
        return {n: i for i, n in enumerate(self.nodes)}


# --------------------------------------------------------------------------
# parsing


@dataclass
class _Tok:
    text: str
    col: int


class _LineError(Exception):
    def __init__(self, message):
        self.message = message
        super().__init__(message)


def _logical_lines(text: str):
    """Yield ``(first_line_number, line)`` with comments stripped and continuations joined."""
    current = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0].rstrip()
        stripped = line.strip()
        if not stripped or stripped.startswith("*"):
            continue
        if stripped.startswith("+"):
            if current is None:
                yield number, stripped  # reported as an orphan continuation
            else:
                current[1] += " " + stripped[1:]
            continue
        if current is not None:
            yield tuple(current)
        current = [number, stripped]
    if current is not None:
        yield tuple(current)


def _tokenize(line: str):
    raw = [_Tok(m.group().lower(), m.start() + 1) for m in _TOKEN.finditer(line)]
    positional, params = [], []
    i = 0
    while i < len(raw):
        if i + 2 < len(raw) and raw[i + 1].text == "=":
            params.append((raw[i], raw[i + 2]))
            i += 3
            continue
        if raw[i].text == "=":
            raise _LineError(f"stray '=' at column {raw[i].col}")
        positional.append(raw[i])
        i += 1
    return positional, params


def _value(tok: _Tok) -> float:
    try:
        v = parse_value(tok.text)
    except ValueParseError as exc:
        raise _LineError(f"malformed number {tok.text!r} at column {tok.col + exc.column - 1}")
    if not math.isfinite(v):
        raise _LineError(f"non-finite value {tok.text!r} at column {tok.col}")
    return v


def _arity(kind: str, toks, expected: int):
    if len(toks) != expected:
        raise _LineError(f"{kind} {toks[0].text} expects {expected - 1} fields, got {len(toks) - 1}")


def _no_params(params):
    if params:
        key = params[0][0]
        raise _LineError(f"unexpected parameter {key.text!r} at column {key.col}")


def _parse_source_value(toks):
    # toks after the two nodes; returns a value or a Sin
    if not toks:
        raise _LineError("missing source value")
    head = toks[0].text
    if head == "dc":
        if len(toks) != 2:
            raise _LineError("DC expects exactly one value")
        return Dc(_value(toks[1]))
    if head == "sin":
        args = toks[1:]
        if len(args) > 3:
            raise _LineError("SIN takes (offset amplitude freq); delay, damping and phase are not supported")
        if len(args) < 3:
            raise _LineError(f"SIN expects 3 values, got {len(args)}")
        return Sin(*(_value(t) for t in args))
    if len(toks) != 1:
        raise _LineError(f"unexpected token {toks[1].text!r} at column {toks[1].col}")
    return Dc(_value(toks[0]))


def _parse_element(positional, params):
    name = positional[0].text
    kind = name[0]
    if kind == "m":
        _arity("MOSFET", positional, 6)
        geom = {"w": DEFAULT_W, "l": DEFAULT_L}
        for key, val in params:
            if key.text not in geom:
                raise _LineError(f"unknown MOSFET parameter {key.text!r} at column {key.col}")
            geom[key.text] = _value(val)
        if not (geom["w"] > 0 and geom["l"] > 0):
            raise _LineError(f"{name}: W and L must be positive")
        d, g, s, b, model = (t.text for t in positional[1:])
        return Mos(name, d, g, s, b, model, geom["w"], geom["l"])
    _no_params(params)
    if kind == "r":
        _arity("resistor", positional, 4)
        ohms = _value(positional[3])
        if ohms == 0:
            raise _LineError(f"{name}: zero resistance")
        return Resistor(name, positional[1].text, positional[2].text, ohms)
    if kind == "c":
        _arity("capacitor", positional, 4)
        return Capacitor(name, positional[1].text, positional[2].text, _value(positional[3]))
    if kind in "vi":
        if len(positional) < 4:
            raise _LineError(f"source {name} expects nodes and a value")
        wave = _parse_source_value(positional[3:])
        if kind == "v":
            return VSource(name, positional[1].text, positional[2].text, wave)
        if not isinstance(wave, Dc):
            raise _LineError(f"current source {name} must be DC")
        return ISource(name, positional[1].text, positional[2].text, wave.volts)
    if kind == "e":
        _arity("VCVS", positional, 6)
        p, n, cp, cn = (t.text for t in positional[1:5])
        return Vcvs(name, p, n, cp, cn, _value(positional[5]))
    if kind == "f":
        _arity("CCCS", positional, 5)
        p, n, ctrl = (t.text for t in positional[1:4])
        return Cccs(name, p, n, ctrl, _value(positional[4]))
    raise _LineError(f"unknown element type {name[0].upper()!r} ({name})")


_MODEL_KEYS = {"vto": "vto", "kp": "kp", "lambda": "lam"}


def _parse_model(positional, params, warnings, lineno):
    if len(positional) != 3:
        raise _LineError(".model expects: .model name NMOS|PMOS params")
    name, kind = positional[1].text, positional[2].text
    try:
        polarity = MosPolarity(kind)
    except ValueError:
        raise _LineError(f"unsupported model type {kind!r}")
    values = {"vto": 0.0, "kp": 2e-5, "lam": 0.0}
    ignored = []
    for key, val in params:
        v = _value(val)
        if key.text in _MODEL_KEYS:
            values[_MODEL_KEYS[key.text]] = v
        else:
            ignored.append(key.text.upper())
    if ignored:
        warnings.append(str(Diagnostic(lineno, f"model {name}: ignored parameters: {', '.join(ignored)}")))
    try:
        return MosModelCard(name, polarity, values["vto"], values["kp"], values["lam"])
    except ValueError as exc:
        raise _LineError(str(exc))


def _parse_directive(positional, params):
    head = positional[0].text
    if head == ".op":
        _arity(".op", positional, 1)
        _no_params(params)
        return Op()
    if head == ".dc":
        _no_params(params)
        _arity(".dc", positional, 5)
        start, stop, step = (_value(t) for t in positional[2:])
        if not step > 0:
            raise _LineError(".dc step must be positive")
        return DcSweep(positional[1].text, start, stop, step)
    if head == ".tran":
        _no_params(params)
        uic = len(positional) == 4 and positional[3].text == "uic"
        if len(positional) != 3 + uic:
            raise _LineError(".tran expects: .tran tstep tstop [UIC]")
        tstep, tstop = _value(positional[1]), _value(positional[2])
        if not (tstep > 0 and tstop > tstep):
            raise _LineError(".tran needs 0 < tstep < tstop")
        return Tran(tstep, tstop, uic)
    raise _LineError(f"unknown directive {head}")


def parse_netlist(text: str) -> Circuit:
    """Parse netlist text into an (unvalidated) :class:`Circuit`.

    Raises :class:`NetlistError` carrying one diagnostic per bad line.
    """
    errors, warnings = [], []
    elements, models, directives = [], {}, []
    seen = {}
    for lineno, line in _logical_lines(text):
        try:
            if line.startswith("+"):
                raise _LineError("continuation line without a preceding card")
            positional, params = _tokenize(line)
            if not positional:
                raise _LineError("empty card")
            head = positional[0].text
            if head == ".end":
                break
            if head == ".model":
                card = _parse_model(positional, params, warnings, lineno)
                if card.name in models:
                    raise _LineError(f"duplicate model {card.name}")
                models[card.name] = card
                seen.setdefault("." + card.name, lineno)
            elif head.startswith("."):
                directives.append(_parse_directive(positional, params))
            else:
                elem = _parse_element(positional, params)
                if elem.name in seen:
                    raise _LineError(f"duplicate element name {elem.name} (first on line {seen[elem.name]})")
                seen[elem.name] = lineno
                elements.append(elem)
        except _LineError as exc:
            errors.append(Diagnostic(lineno, exc.message))
    if errors:
        raise NetlistError(errors)
    return Circuit(tuple(elements), models, tuple(directives),
                   warnings=tuple(warnings), source_lines=seen)


def validate_circuit(circuit: Circuit) -> Circuit:
    """Check references and connectivity, and assign node indices (ground = 0)."""
    errors = []

    def err(name, message):
        errors.append(Diagnostic(circuit.source_lines.get(name), message))

    vsources = {e.name for e in circuit.elements if isinstance(e, VSource)}
    sweepable = vsources | {e.name for e in circuit.elements if isinstance(e, ISource)}
    for e in circuit.elements:
        if isinstance(e, Mos) and e.model not in circuit.models:
            err(e.name, f"unknown model {e.model}")
        if isinstance(e, Cccs) and e.control not in vsources:
            err(e.name, f"{e.name}: control {e.control} is not a voltage source")
    for d in circuit.directives:
        if isinstance(d, DcSweep) and d.source not in sweepable:
            errors.append(Diagnostic(None, f".dc: unknown source {d.source}"))

    order = []
    parent = {}

    def find(n):
        while parent[n] != n:
            parent[n] = parent[parent[n]]
            n = parent[n]
        return n

    for e in circuit.elements:
        for n in e.nodes:
            if n not in parent:
                parent[n] = n
                order.append(n)
        root = find(e.nodes[0])
        for n in e.nodes[1:]:
            parent[find(n)] = root

    if circuit.elements and GROUND not in parent:
        errors.append(Diagnostic(None, "no ground node '0'"))
    elif circuit.elements:
        g = find(GROUND)
        floating = [n for n in order if find(n) != g]
        if floating:
            errors.append(Diagnostic(None, f"floating nodes (no path to ground): {', '.join(floating)}"))
    if errors:
        raise NetlistError(errors)
    nodes = (GROUND,) + tuple(n for n in order if n != GROUND) if circuit.elements else ()
    return dataclasses.replace(circuit, nodes=nodes)


def load_netlist(text: str) -> Circuit:
    return validate_circuit(parse_netlist(text))


# --------------------------------------------------------------------------
# emission


def format_value(x: float) -> str:
    """Shortest text that parses back to exactly ``x``."""
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def _emit_element(e) -> str:
    f = format_value
    if isinstance(e, Mos):
        return f"{e.name} {e.drain} {e.gate} {e.source} {e.bulk} {e.model} W={f(e.w)} L={f(e.l)}"
    if isinstance(e, Resistor):
        return f"{e.name} {e.n1} {e.n2} {f(e.ohms)}"
    if isinstance(e, Capacitor):
        return f"{e.name} {e.n1} {e.n2} {f(e.farads)}"
    if isinstance(e, VSource):
        w = e.wave
        if isinstance(w, Sin):
            return f"{e.name} {e.npos} {e.nneg} SIN({f(w.offset)} {f(w.amplitude)} {f(w.freq)})"
        return f"{e.name} {e.npos} {e.nneg} DC {f(w.volts)}"
    if isinstance(e, ISource):
        return f"{e.name} {e.npos} {e.nneg} DC {f(e.amps)}"
    if isinstance(e, Vcvs):
        return f"{e.name} {e.npos} {e.nneg} {e.cpos} {e.cneg} {f(e.gain)}"
    if isinstance(e, Cccs):
        return f"{e.name} {e.npos} {e.nneg} {e.control} {f(e.gain)}"
    raise TypeError(f"cannot emit {type(e).__name__}")


def _emit_directive(d) -> str:
    f = format_value
    if isinstance(d, Op):
        return ".op"
    if isinstance(d, DcSweep):
        return f".dc {d.source} {f(d.start)} {f(d.stop)} {f(d.step)}"
    if isinstance(d, Tran):
        return f".tran {f(d.tstep)} {f(d.tstop)}" + (" UIC" if d.uic else "")
    raise TypeError(f"cannot emit {type(d).__name__}")


def emit_netlist(circuit: Circuit) -> str:
    lines = [_emit_element(e) for e in circuit.elements]
    for card in circuit.models.values():
        lines.append(f".model {card.name} {card.polarity.value.upper()} "
                     f"(VTO={format_value(card.vto)} KP={format_value(card.kp)} "
                     f"LAMBDA={format_value(card.lam)})")
    lines.extend(_emit_directive(d) for d in circuit.directives)
    lines.append(".end")
    return "\n".join(lines) + "\n"
