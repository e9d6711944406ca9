"""Square-law circuit simulator and behavioral model of a CMOS sinusoidal frequency doubler."""
from .analysis import (ChainParams, HarmonicReport, RootMode, Waveform, behav_diffamp_current,
                       behav_doubler, behav_inverter, behav_series_approx, behav_sqrt, goertzel,
                       harmonic_report)
from .engine import (NewtonOptions, OperatingPoint, TranOptions, dc_sweep, linear_solve, solve_dc,
                     solve_tran)
from .model import MosEval, MosGeometry, MosModelCard, MosPolarity, device_k, mos_eval, mos_region
from .netlist import Circuit, emit_netlist, load_netlist, parse_netlist, parse_value, validate_circuit
from .reference import ModelSet, build_diffamp, build_doubler, build_inverter, build_sqrt

__version__ = "0.1.0"
