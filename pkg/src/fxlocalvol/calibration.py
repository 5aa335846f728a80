"""Round-trip check of a local vol calibration against the quotes it came from."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import blackscholes as bs
from .errors import LocalVolError
from .marketdata import MarketSnapshot
from .pdepricer import PayoffSpec, build_mesh, cn_solve
from .surface import SIGMA_CAP, ImpliedSurface, build_localvol_grid

FLAG_THRESHOLD = 0.005


@dataclass(frozen=True)
class CalibrationRow:
    date: object
    tenor: float
    label: str
    side: str
    strike: float
    market_vol: float
    model_vol: float
    abs_error: float
    flagged: bool
    message: str = ""

    @property
    def failed(self) -> bool:
        return bool(self.message)


@dataclass
class CalibrationReport:
    rows: list = field(default_factory=list)

    def averages(self) -> dict:
        """Mean absolute error per (tenor, label) cell over all dates, failed rows excluded."""
        cells = defaultdict(list)
        for r in self.rows:
            if not r.failed:
                cells[(r.tenor, r.label)].append(r.abs_error)
        return {k: float(np.mean(v)) for k, v in cells.items()}

    @property
    def max_error(self) -> float:
        errs = [r.abs_error for r in self.rows if not r.failed]
        return max(errs) if errs else math.nan

    @property
    def mean_error(self) -> float:
        errs = [r.abs_error for r in self.rows if not r.failed]
        return float(np.mean(errs)) if errs else math.nan

    @property
    def n_flagged(self) -> int:
        return sum(r.flagged for r in self.rows)


def calibrate_check(snapshot: MarketSnapshot, gamma=7.0, grid_m=400, sigma_cap=SIGMA_CAP,
                    threshold=FLAG_THRESHOLD) -> list:
    """Reprice every quoted option under the day's local vol and invert to implied vol.

    Puts are used for the put-delta strikes, calls elsewhere. Rows whose
    repricing or inversion fails are kept, flagged and carry the message.
    """
    surf = ImpliedSurface(snapshot)
    rows = []
    for q, points in zip(snapshot.quotes, surf.smiles):
        mesh = build_mesh(snapshot.spot, q.tenor, snapshot.theta_bar, gamma, grid_m)
        grid = build_localvol_grid(surf, mesh, sigma_cap)
        for p in points:
            try:
                sol = cn_solve(mesh, PayoffSpec(p.side, p.strike), grid,
                               snapshot.dom_curve, snapshot.for_curve)
                model = bs.implied_vol(float(sol.values[mesh.center]), snapshot.spot, p.strike,
                                       q.tenor, q.dom_zero, q.for_zero, p.side)
            except LocalVolError as exc:
                rows.append(CalibrationRow(snapshot.date, q.tenor, p.label, p.side, p.strike,
                                           p.implied_vol, math.nan, math.nan, True, str(exc)))
                continue
            err = abs(model - p.implied_vol)
            rows.append(CalibrationRow(snapshot.date, q.tenor, p.label, p.side, p.strike,
                                       p.implied_vol, model, err, err > threshold))
    return rows


def calibrate_history(snapshots, **kwargs) -> CalibrationReport:
    report = CalibrationReport()
    for snap in snapshots:
        report.rows.extend(calibrate_check(snap, **kwargs))
    return report
