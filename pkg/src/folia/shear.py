"""Strip periods and real shears of horizontal strips.

A strip's period is the integral of ``sqrt(q)`` along a transverse arc
joining its two boundary zeros, signed so that the imaginary part (the
strip width) is positive.  Shearing cuts the strip along a leaf and
reglues with a real translation, which adds a real number to the period.

Period data keep the unsheared base value and the accumulated shear
separately, so composing shears is exact in floating point.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from folia.formats import write_csv
from folia.foliation import FoliationError, FoliationSkeleton, zero_to_zero_integral
from folia.qdiff import QuadraticDifferential

TRUST_FACTOR = 10.0


class ShearError(ValueError):
    pass


@dataclass(frozen=True)
class StripPeriod:
    strip: int
    base: complex           # unsheared period, Im > 0
    shear: float = 0.0      # accumulated real translation
    orientation: int = 1    # sign applied to the raw arc integral

    @property
    def period(self) -> complex:
        return complex(self.base.real + self.shear, self.base.imag)

    @property
    def width(self) -> float:
        return float(self.base.imag)

    def to_json(self):
        p = self.period
        return {"strip": self.strip, "re": p.real, "im": p.imag, "width": self.width,
                "shear": self.shear, "orientation": self.orientation}


def strip_period(q: QuadraticDifferential, skeleton: FoliationSkeleton, index: int) -> StripPeriod:
    """Re-integrate ``sqrt(q)`` along the strip's recorded transverse arc."""
    if not 0 <= index < len(skeleton.strips):
        raise ShearError(f"no strip {index}")
    arc = np.asarray(skeleton.strips[index].transverse_arc, dtype=complex)
    if arc.size < 2 or not np.all(np.isfinite(arc)) or abs(arc[-1] - arc[0]) == 0:
        raise ShearError("degenerate arc")
    try:
        raw = zero_to_zero_integral(q, arc)
    except FoliationError as err:
        raise ShearError(f"degenerate arc: {err}") from None
    if raw.imag == 0:
        raise ShearError("degenerate arc: zero width")
    sign = 1 if raw.imag > 0 else -1
    return StripPeriod(index, sign * raw, 0.0, sign)


def strip_periods(q: QuadraticDifferential, skeleton: FoliationSkeleton) -> list[StripPeriod]:
    return [strip_period(q, skeleton, j) for j in range(len(skeleton.strips))]


def skeleton_periods(skeleton: FoliationSkeleton) -> list[StripPeriod]:
    """Period data as recorded by the decomposition itself."""
    return [StripPeriod(j, complex(s.period)) for j, s in enumerate(skeleton.strips)]


def apply_shear(data: Union[FoliationSkeleton, Sequence[StripPeriod]], s: Sequence[float],
                trust_factor: float = TRUST_FACTOR) -> list[StripPeriod]:
    """Translate each strip period by the real shear ``s_j``.

    Widths and all combinatorial data are untouched.  Shears are limited to
    ``|s_j| <= trust_factor * width_j`` since the shear map is only known to
    be a local diffeomorphism.
    """
    if isinstance(data, FoliationSkeleton):
        if data.saddle_connections:
            raise ShearError("non-generic skeleton")
        periods = skeleton_periods(data)
    else:
        periods = list(data)
    s = [float(x) for x in s]
    if len(s) != len(periods):
        raise ShearError(f"dimension mismatch: {len(s)} shears for {len(periods)} strips")
    out = []
    for p, sj in zip(periods, s):
        total = p.shear + sj
        if abs(total) > trust_factor * p.width:
            raise ShearError(f"shear {total} outside trust region of strip {p.strip}")
        out.append(replace(p, shear=total))
    return out


def generic_strip_count(g: int, pole_orders: Sequence[int]) -> int:
    """Number of strips of a generic differential, ``6g - 6 + sum(n_i + 1)``."""
    return 6 * g - 6 + sum(n + 1 for n in pole_orders)


def write_periods_csv(path, periods: Sequence[StripPeriod]) -> None:
    write_csv(path, ["strip", "re", "im", "width"],
              ([p.strip, p.period.real, p.period.imag, p.width] for p in periods))


def read_periods_csv(path) -> list[StripPeriod]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [StripPeriod(int(r["strip"]), complex(float(r["re"]), float(r["im"]))) for r in rows]
