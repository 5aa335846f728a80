"""Historical FX market snapshots, zero curves and ATM volatility term structures.

A snapshot carries, per tenor, the ATM vol, 10/25 delta risk reversals and
butterflies, and domestic/foreign zero rates. Smile vols are rebuilt from the
broker quotes and strikes are recovered from spot deltas.
"""

from __future__ import annotations

import csv
import datetime as _dt
import io
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Sequence, TextIO

import numpy as np

from . import blackscholes as bs
from .errors import ConfigurationError, DataError, DomainError, ParseError

logger = logging.getLogger(__name__)

LABELS = ("P10", "P25", "ATM", "C25", "C10")
QUOTE_FIELDS = ("atm", "rr25", "rr10", "fly25", "fly10", "dom_zero", "for_zero")

# label -> (option side, signed spot delta); ATM is the delta-neutral straddle strike
LABEL_DELTAS = {
    "P10": ("put", -0.10),
    "P25": ("put", -0.25),
    "ATM": ("call", None),
    "C25": ("call", 0.25),
    "C10": ("call", 0.10),
}


class _PiecewiseTerm:
    """Quantity whose running integral is piecewise linear through the pillars.

    ``averages`` are term averages (zero rates, or ATM variances); the
    instantaneous value on each interval is the constant forward implied by
    consecutive pillars, held flat beyond the last pillar.
    """

    def __init__(self, times: Sequence[float], averages: Sequence[float]):
        times = np.asarray(times, dtype=float)
        averages = np.asarray(averages, dtype=float)
        if times.size == 0:
            raise ConfigurationError("term structure needs at least one pillar")
        if times.shape != averages.shape:
            raise ConfigurationError("pillar times and values differ in length")
        if np.any(times <= 0) or np.any(np.diff(times) <= 0):
            raise ConfigurationError("pillar times must be positive and strictly increasing")
        self.times = times
        self.averages = averages
        cum = times * averages
        fwd = np.empty_like(times)
        fwd[0] = averages[0]
        fwd[1:] = np.diff(cum) / np.diff(times)
        self.forwards = fwd
        self._cum = cum

    def instantaneous(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="left")
        idx = np.minimum(idx, self.times.size - 1)
        return self.forwards[idx]

    def integral(self, T):
        """Integral of the instantaneous value over [0, T]."""
        T = np.asarray(T, dtype=float)
        idx = np.searchsorted(self.times, T, side="left")
        i_prev = idx - 1
        base_t = np.where(i_prev >= 0, self.times[np.maximum(i_prev, 0)], 0.0)
        base = np.where(i_prev >= 0, self._cum[np.maximum(i_prev, 0)], 0.0)
        fwd = self.forwards[np.minimum(idx, self.times.size - 1)]
        out = base + fwd * (T - base_t)
        # exact pillar values, free of rounding in base + fwd * dt
        at_pillar = (idx < self.times.size) & (self.times[np.minimum(idx, self.times.size - 1)] == T)
        return np.where(at_pillar, self._cum[np.minimum(idx, self.times.size - 1)], out)


@dataclass(frozen=True)
class ZeroCurve:
    """Zero curve with ``t * zero(t)`` piecewise linear through (0, g1), (T1, g1), ..."""

    times: tuple
    rates: tuple

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        _PiecewiseTerm(self.times, self.rates)  # validates

    @classmethod
    def flat(cls, rate: float, horizon: float = 30.0) -> "ZeroCurve":
        return cls((horizon,), (rate,))

    @cached_property
    def _term(self) -> _PiecewiseTerm:
        return _PiecewiseTerm(self.times, self.rates)

    def instantaneous(self, t):
        return _scalar(self._term.instantaneous(t))

    def integral(self, T):
        return _scalar(self._term.integral(T))

    def average(self, T):
        T_arr = np.asarray(T, dtype=float)
        if np.any(T_arr <= 0):
            raise DomainError("average rate needs T > 0")
        term = self._term
        idx = np.searchsorted(term.times, T_arr)
        idx_c = np.minimum(idx, term.times.size - 1)
        exact = (idx < term.times.size) & (term.times[idx_c] == T_arr)
        return _scalar(np.where(exact, term.averages[idx_c], term.integral(T_arr) / T_arr))


@dataclass(frozen=True)
class VolTermStructure:
    """ATM implied vol pillars with piecewise-constant instantaneous variance."""

    times: tuple
    vols: tuple

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "vols", tuple(float(v) for v in self.vols))
        if any(not v > 0 for v in self.vols):
            raise ConfigurationError("ATM pillar vols must be positive")
        _PiecewiseTerm(self.times, np.square(self.vols))

    @classmethod
    def flat(cls, vol: float, horizon: float = 30.0) -> "VolTermStructure":
        return cls((horizon,), (vol,))

    @cached_property
    def _term(self) -> _PiecewiseTerm:
        term = _PiecewiseTerm(self.times, np.square(self.vols))
        for k in np.flatnonzero(term.forwards < 0):
            logger.warning(
                "negative forward variance %.6g on (%g, %g]; clamped to zero",
                term.forwards[k], self.times[k - 1], self.times[k],
            )
        if np.any(term.forwards < 0):
            clamped = np.maximum(term.forwards, 0.0)
            term = _PiecewiseTerm(self.times, np.cumsum(clamped * np.diff(self.times, prepend=0.0))
                                  / np.asarray(self.times))
        return term

    def instantaneous_variance(self, t):
        return _scalar(self._term.instantaneous(t))

    def instantaneous(self, t):
        return _scalar(np.sqrt(self._term.instantaneous(t)))

    def average(self, T):
        T_arr = np.asarray(T, dtype=float)
        if np.any(T_arr <= 0):
            raise DomainError("average vol needs T > 0")
        term = self._term
        idx = np.minimum(np.searchsorted(term.times, T_arr), term.times.size - 1)
        at_pillar = term.times[idx] == T_arr
        # pillar averages are reported from the stored vols, not re-derived through sqrt
        pillar = np.where(term.averages[idx] == np.square(self.vols)[idx],
                          np.asarray(self.vols)[idx], np.sqrt(term.averages[idx]))
        return _scalar(np.where(at_pillar, pillar, np.sqrt(term.integral(T_arr) / T_arr)))


def instantaneous_rate(curve: ZeroCurve, t):
    """Piecewise-constant instantaneous rate implied by the zero curve."""
    return curve.instantaneous(t)


def average_rate(curve: ZeroCurve, T):
    """Average of the instantaneous rate over [0, T]; equals the zero rate at pillars."""
    return curve.average(T)


def instantaneous_vol(ts: VolTermStructure, t):
    return ts.instantaneous(t)


def average_vol(ts: VolTermStructure, T):
    return ts.average(T)


@dataclass(frozen=True)
class TenorQuote:
    tenor: float
    atm: float
    rr25: float
    rr10: float
    fly25: float
    fly10: float
    dom_zero: float
    for_zero: float

    def __post_init__(self):
        if not self.tenor > 0:
            raise DataError(f"tenor must be positive, got {self.tenor}")
        if not self.atm >= 0:
            raise DataError(f"ATM vol must be non-negative at tenor {self.tenor}")


@dataclass(frozen=True)
class SmilePoint:
    label: str
    strike: float
    implied_vol: float
    side: str


def smile_vols(q: TenorQuote) -> dict:
    """Rebuild the five smile vols from ATM, risk reversal and butterfly quotes."""
    vols = {
        "P10": q.atm + q.fly10 - 0.5 * q.rr10,
        "P25": q.atm + q.fly25 - 0.5 * q.rr25,
        "ATM": q.atm,
        "C25": q.atm + q.fly25 + 0.5 * q.rr25,
        "C10": q.atm + q.fly10 + 0.5 * q.rr10,
    }
    bad = [k for k, v in vols.items() if not v > 0]
    if bad:
        raise DataError(f"non-positive smile vol {bad} at tenor {q.tenor:g}")
    return vols


def strike_from_delta(spot, T, rate_d, rate_f, vol, target, side="call") -> float:
    """Strike whose spot delta equals ``target`` (signed: puts are negative)."""
    if not (spot > 0 and T > 0 and vol > 0):
        raise DomainError("strike_from_delta needs spot > 0, T > 0, vol > 0")
    cap = math.exp(-rate_f * T)
    if side == "call":
        if not 0 < target < cap:
            raise DomainError(f"call delta {target} outside (0, {cap})")
        dd1 = bs.norm_inv_cdf(target / cap)
    elif side == "put":
        if not -cap < target < 0:
            raise DomainError(f"put delta {target} outside ({-cap}, 0)")
        dd1 = -bs.norm_inv_cdf(-target / cap)
    else:
        raise DomainError(f"unknown option side {side!r}")
    sd = vol * math.sqrt(T)
    return spot * math.exp((rate_d - rate_f + 0.5 * vol * vol) * T - sd * dd1)


def atm_strike(spot, T, rate_d, rate_f, vol) -> float:
    """Delta-neutral straddle strike, where call and put deltas cancel."""
    return spot * math.exp((rate_d - rate_f + 0.5 * vol * vol) * T)


@dataclass(frozen=True)
class MarketSnapshot:
    date: _dt.date
    spot: float
    quotes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "quotes", tuple(self.quotes))
        if not self.spot > 0:
            raise DataError(f"{self.date}: spot must be positive, got {self.spot}")
        if len(self.quotes) < 2:
            raise DataError(f"{self.date}: need at least 2 tenors")
        tenors = [q.tenor for q in self.quotes]
        if any(b <= a for a, b in zip(tenors, tenors[1:])):
            raise DataError(f"{self.date}: tenors not increasing")

    @property
    def tenors(self) -> np.ndarray:
        return np.array([q.tenor for q in self.quotes])

    @cached_property
    def dom_curve(self) -> ZeroCurve:
        return ZeroCurve(tuple(self.tenors), tuple(q.dom_zero for q in self.quotes))

    @cached_property
    def for_curve(self) -> ZeroCurve:
        return ZeroCurve(tuple(self.tenors), tuple(q.for_zero for q in self.quotes))

    @cached_property
    def atm_vols(self) -> VolTermStructure:
        return VolTermStructure(tuple(self.tenors), tuple(q.atm for q in self.quotes))

    @property
    def theta_bar(self) -> float:
        """Arithmetic mean of the ATM pillar vols."""
        return float(np.mean([q.atm for q in self.quotes]))

    def quote(self, tenor: float, tol: float = 1e-6) -> TenorQuote:
        for q in self.quotes:
            if abs(q.tenor - tenor) <= tol:
                return q
        raise DataError(f"{self.date}: tenor {tenor:g} not quoted")

    def with_spot(self, spot: float) -> "MarketSnapshot":
        return replace(self, spot=spot)

    def smile(self, q: TenorQuote) -> list:
        """The five (label, strike, vol) market points at one tenor."""
        vols = smile_vols(q)
        points = []
        for label in LABELS:
            side, target = LABEL_DELTAS[label]
            vol = vols[label]
            if target is None:
                k = atm_strike(self.spot, q.tenor, q.dom_zero, q.for_zero, vol)
            else:
                k = strike_from_delta(self.spot, q.tenor, q.dom_zero, q.for_zero, vol, target, side)
            points.append(SmilePoint(label, k, vol, side))
        strikes = [p.strike for p in points]
        if any(b <= a for a, b in zip(strikes, strikes[1:])):
            raise DataError(f"{self.date}: smile strikes out of order at tenor {q.tenor:g}")
        return points

    def label_strike(self, label: str, tenor: float) -> float:
        q = self.quote(tenor)
        for p in self.smile(q):
            if p.label == label:
                return p.strike
        raise DomainError(f"unknown smile label {label!r}")


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def format_header(tenors: Iterable[float]) -> list:
    cols = ["date", "spot"]
    for t in tenors:
        cols.extend(f"{f}@{float(t)!r}" for f in QUOTE_FIELDS)
    return cols


def _parse_header(header: list) -> list:
    if header[:2] != ["date", "spot"]:
        raise ParseError("header must start with 'date,spot'", 1)
    rest = header[2:]
    if not rest or len(rest) % len(QUOTE_FIELDS):
        raise ParseError(f"expected {len(QUOTE_FIELDS)} columns per tenor", 1)
    tenors = []
    for k in range(0, len(rest), len(QUOTE_FIELDS)):
        block = rest[k:k + len(QUOTE_FIELDS)]
        tenor = None
        for expected, col in zip(QUOTE_FIELDS, block):
            name, sep, t = col.strip().partition("@")
            if not sep or name != expected:
                raise ParseError(f"column {col!r}: expected '{expected}@<tenor>'", 1)
            try:
                t = float(t)
            except ValueError:
                raise ParseError(f"column {col!r}: bad tenor", 1) from None
            if tenor is None:
                tenor = t
            elif t != tenor:
                raise ParseError(f"column {col!r}: tenor differs within block", 1)
        tenors.append(tenor)
    if any(b <= a for a, b in zip(tenors, tenors[1:])):
        raise DataError("tenors not increasing")
    return tenors


def parse_history(stream: TextIO | str) -> list:
    """Read daily snapshots from CSV text; returns them sorted by date."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty input", 1) from None
    tenors = _parse_header(header)
    width = 2 + len(QUOTE_FIELDS) * len(tenors)
    snapshots = []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != width:
            raise ParseError(f"expected {width} fields, got {len(row)}", line)
        try:
            date = _dt.date.fromisoformat(row[0].strip())
            values = [float(c) for c in row[1:]]
        except ValueError as exc:
            raise ParseError(str(exc), line) from None
        if not all(math.isfinite(v) for v in values):
            raise ParseError("non-finite value", line)
        spot = values[0]
        if not spot > 0:
            raise DataError(f"line {line}: spot must be positive, got {spot}")
        quotes = []
        n = len(QUOTE_FIELDS)
        for k, t in enumerate(tenors):
            rec = dict(zip(QUOTE_FIELDS, values[1 + k * n:1 + (k + 1) * n]))
            quotes.append(TenorQuote(tenor=t, **rec))
        snapshots.append(MarketSnapshot(date, spot, tuple(quotes)))
    snapshots.sort(key=lambda s: s.date)
    dates = [s.date for s in snapshots]
    if len(set(dates)) != len(dates):
        raise DataError("duplicate dates in history")
    return snapshots


def write_history(snapshots: Sequence[MarketSnapshot], stream: TextIO) -> None:
    """Inverse of :func:`parse_history`; all snapshots must share one tenor grid."""
    tenors = list(snapshots[0].tenors)
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(format_header(tenors))
    for snap in snapshots:
        if list(snap.tenors) != tenors:
            raise DataError(f"{snap.date}: tenor grid differs from first snapshot")
        row = [snap.date.isoformat(), repr(float(snap.spot))]
        for q in snap.quotes:
            row.extend(repr(float(getattr(q, f))) for f in QUOTE_FIELDS)
        writer.writerow(row)
