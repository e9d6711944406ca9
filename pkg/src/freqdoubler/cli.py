"""Command-line front end.

Exit codes: 0 success, 1 user error (bad file, netlist or flag), 2 numerical
failure. Results go to stdout (or ``--out``) as CSV; diagnostics go to
stderr. ``FREQDOUBLER_OUTDIR`` re-roots relative ``--out`` paths.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from pathlib import Path

from . import analysis, engine, reference
from .netlist import DcSweep, Mos, NetlistError, Tran, ValueParseError, load_netlist, parse_value

OUTDIR_ENV = "FREQDOUBLER_OUTDIR"


class UserError(Exception):
    pass


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    if hasattr(x, "dtype"):
        return _fmt(x.item())
    return str(x)


def write_csv(header, rows) -> str:
    """CSV text with '\\n' line endings and shortest round-trip floats."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    width = len(header)
    for row in rows:
        if len(row) != width:
            raise ValueError(f"row has {len(row)} fields, header has {width}")
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _number(text):
    try:
        return parse_value(text)
    except ValueParseError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _load(path):
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise UserError(f"{path}: {exc.strerror or exc}")
    try:
        circuit = load_netlist(text)
    except NetlistError as exc:
        lines = []
        for d in exc.errors:
            where = f"{path}:{d.line}" if d.line is not None else str(path)
            lines.append(f"{where}: {d.message}")
        raise UserError("\n".join(lines))
    for w in circuit.warnings:
        print(f"{path}: warning: {w}", file=sys.stderr)
    return circuit


def _resolve(out) -> Path:
    path = Path(out)
    root = os.environ.get(OUTDIR_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _emit(text: str, out):
    if out is None:
        sys.stdout.write(text)
    else:
        _resolve(out).write_text(text)


def _directive(circuit, kind):
    for d in circuit.directives:
        if isinstance(d, kind):
            return d
    return None


def _tran_options(circuit, tstep, tstop):
    d = _directive(circuit, Tran)
    tstep = tstep if tstep is not None else (d.tstep if d else None)
    tstop = tstop if tstop is not None else (d.tstop if d else None)
    if tstep is None or tstop is None:
        raise UserError("no .tran directive; pass --tstep and --tstop")
    try:
        return engine.TranOptions(tstep, tstop, uic=bool(d and d.uic))
    except ValueError as exc:
        raise UserError(str(exc))


def _tran_table(result: engine.TransientResult):
    header = ["t_s"] + [f"v({n})_v" for n in result.node_names] + [f"i({b})_a" for b in result.branch_names]
    rows = [[float(t)] + [float(v) for v in row] for t, row in zip(result.time, result.x)]
    return header, rows


def cmd_check(args):
    c = _load(args.file)
    n_mos = len(c.of_type(Mos))
    print(f"ok: {n_mos} mosfets, {len(c.nodes)} nodes")


def cmd_op(args):
    c = _load(args.file)
    op = engine.solve_dc(c)
    rows = [(f"v({n})", v) for n, v in op.node_voltages.items() if n != "0"]
    rows += [(f"i({n})", v) for n, v in op.source_currents.items()]
    _emit(write_csv(["name", "value"], rows), args.out)
    print(f"converged in {op.iterations} iterations ({op.strategy})", file=sys.stderr)


def cmd_dc(args):
    c = _load(args.file)
    d = _directive(c, DcSweep)
    source = args.source or (d.source if d else None)
    start = args.start if args.start is not None else (d.start if d else None)
    stop = args.stop if args.stop is not None else (d.stop if d else None)
    step = args.step if args.step is not None else (d.step if d else None)
    if None in (source, start, stop, step):
        raise UserError("no .dc directive; pass --source, --start, --stop and --step")
    try:
        sweep = engine.dc_sweep(c, source, start, stop, step)
    except (KeyError, ValueError) as exc:
        raise UserError(str(exc).strip("'\""))
    nodes = [n for n in c.nodes if n != "0"]
    header = [f"{sweep.source}_sweep"] + [f"v({n})_v" for n in nodes] + ["converged"]
    rows = [[float(val)] + [p.v(n) for n in nodes] + [p.converged]
            for val, p in zip(sweep.values, sweep.points)]
    _emit(write_csv(header, rows), args.out)
    bad = int((~sweep.converged).sum())
    if bad:
        print(f"warning: {bad} sweep points did not converge", file=sys.stderr)


def cmd_tran(args):
    c = _load(args.file)
    result = engine.solve_tran(c, _tran_options(c, args.tstep, args.tstop))
    _emit(write_csv(*_tran_table(result)), args.out)


def cmd_spectrum(args):
    c = _load(args.file)
    result = engine.solve_tran(c, _tran_options(c, args.tstep, args.tstop))
    node = args.node.lower()
    if node not in result.node_names:
        raise UserError(f"unknown node {args.node}")
    try:
        report = analysis.harmonic_report(result.waveform(node), args.f0, args.n)
    except analysis.AnalysisError as exc:
        raise UserError(str(exc))
    _emit(report.to_csv(), args.out)
    print(f"dc={report.dc!r} thd={report.thd!r} doubling_ratio={report.doubling_ratio!r}", file=sys.stderr)


def cmd_demo(args):
    circuit = reference.build_doubler(args.modelset)
    if args.netlist_out:
        reference.export_netlist(circuit, _resolve(args.netlist_out))
    tran = _directive(circuit, Tran)
    result = engine.solve_tran(circuit, engine.TranOptions(tran.tstep, tran.tstop))
    w = result.waveform("out")
    report = analysis.harmonic_report(w, reference.INPUT_FREQ, args.harmonics)
    _emit(report.to_csv(), args.out)
    if args.waveform_out:
        _emit(write_csv(*_tran_table(result)), args.waveform_out)

    gain = analysis.DOUBLER_GAIN[analysis.RootMode(args.mode)]
    predicted = gain * reference.INPUT_AMPLITUDE * 4.0 / (3.0 * math.pi)
    try:
        period = f"{analysis.estimate_period(w):.6g} s"
    except analysis.AnalysisError:
        period = "n/a"
    print(f"modelset={args.modelset} doubling_ratio={report.doubling_ratio:.6g} "
          f"period={period} dc={report.dc:.6g} V thd={report.thd:.6g}", file=sys.stderr)
    print(f"behavioral ({args.mode}) 2f0 magnitude {predicted:.6g} V, "
          f"simulated {report.mags[2]:.6g} V", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="freqdoubler", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def with_out(p):
        p.add_argument("--out", help="write CSV here instead of stdout")
        return p

    p = sub.add_parser("check", help="parse and validate a netlist")
    p.add_argument("file")
    p.set_defaults(func=cmd_check)

    p = with_out(sub.add_parser("op", help="DC operating point"))
    p.add_argument("file")
    p.set_defaults(func=cmd_op)

    p = with_out(sub.add_parser("dc", help="DC sweep"))
    p.add_argument("file")
    p.add_argument("--source")
    p.add_argument("--start", type=_number)
    p.add_argument("--stop", type=_number)
    p.add_argument("--step", type=_number)
    p.set_defaults(func=cmd_dc)

    p = with_out(sub.add_parser("tran", help="transient analysis"))
    p.add_argument("file")
    p.add_argument("--tstep", type=_number)
    p.add_argument("--tstop", type=_number)
    p.set_defaults(func=cmd_tran)

    p = with_out(sub.add_parser("spectrum", help="harmonic report of a node after a transient run"))
    p.add_argument("file")
    p.add_argument("--node", required=True)
    p.add_argument("--f0", type=_number, required=True)
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--tstep", type=_number)
    p.add_argument("--tstop", type=_number)
    p.set_defaults(func=cmd_spectrum)

    p = with_out(sub.add_parser("demo", help="simulate the built-in doubler with a 0.1 V, 1 kHz input"))
    p.add_argument("--modelset", choices=[m.value for m in reference.ModelSet], default="matched")
    p.add_argument("--mode", choices=[m.value for m in analysis.RootMode], default="consistent")
    p.add_argument("--harmonics", type=int, default=6)
    p.add_argument("--netlist-out", help="also write the doubler netlist here")
    p.add_argument("--waveform-out", help="also write the transient waveforms here")
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        args.func(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (engine.ConvergenceError, engine.SingularCircuitError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
