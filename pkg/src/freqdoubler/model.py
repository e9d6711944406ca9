"""First-order square-law MOSFET model.

Saturation current is ``K (Vgs - Vt)^2`` with ``K = (KP/2)(W/L)``; the triode
branch uses ``K (2 (Vgs - Vt) Vds - Vds^2)`` so current and ``gds`` are
continuous where the two regions meet. PMOS devices are evaluated by
reflecting every voltage (and the threshold) into the NMOS frame.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from . import kernels


class MosPolarity(enum.Enum):
    NMOS = "nmos"
    PMOS = "pmos"

    @property
    def sign(self) -> int:
        return 1 if self is MosPolarity.NMOS else -1


class Region(enum.Enum):
    CUTOFF = "cutoff"
    TRIODE = "triode"
    SATURATION = "saturation"


_REGION_CODES = {
    kernels.CUTOFF: Region.CUTOFF,
    kernels.TRIODE: Region.TRIODE,
    kernels.SATURATION: Region.SATURATION,
}


class ModelEvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class MosModelCard:
    name: str
    polarity: MosPolarity
    vto: float
    kp: float
    lam: float = 0.0

    def __post_init__(self):
        if not self.kp > 0:
            raise ValueError(f"model {self.name}: kp must be positive, got {self.kp}")
        if not self.lam >= 0:
            raise ValueError(f"model {self.name}: lambda must be non-negative, got {self.lam}")


@dataclass(frozen=True)
class MosGeometry:
    w: float
    l: float

    def __post_init__(self):
        if not (self.w > 0 and self.l > 0):
            raise ValueError(f"geometry must be positive, got W={self.w} L={self.l}")

    @property
    def ratio(self) -> float:
        return self.w / self.l


@dataclass(frozen=True)
class MosEval:
    id: float
    gm: float
    gds: float
    region: Region


def device_k(card: MosModelCard, geom: MosGeometry) -> float:
    """Device constant K such that saturation current is ``K (Vgs - Vt)^2``."""
    return 0.5 * card.kp * geom.ratio


def mos_region(vgs: float, vds: float, vt: float) -> Region:
    """Operating region in the NMOS frame. ``vds == vgs - vt`` counts as saturation."""
    ov = vgs - vt
    if ov <= 0:
        return Region.CUTOFF
    if vds >= ov:
        return Region.SATURATION
    return Region.TRIODE


def mos_eval(card: MosModelCard, geom: MosGeometry, vgs: float, vds: float) -> MosEval:
    """Drain current and its partials for a device with its source at 0 V.

    ``gm`` and ``gds`` are the exact derivatives of ``id`` with respect to
    ``vgs`` and ``vds``. For PMOS, ``id`` comes out negative.
    """
    for terminal, value in (("vgs", vgs), ("vds", vds)):
        if not math.isfinite(value):
            raise ModelEvaluationError(f"non-finite {terminal}={value!r} for model {card.name}")
    ids, dd, dg, _ds, reg = kernels.mos_terminal(
        card.polarity.sign, device_k(card, geom), card.vto, card.lam,
        float(vds), float(vgs), 0.0)
    return MosEval(float(ids), float(dg), float(dd), _REGION_CODES[int(reg)])
