"""Discrete delta hedging: cash bookkeeping, path simulation and backtest drivers."""

from __future__ import annotations

import datetime as _dt
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import blackscholes as bs
from .errors import DataError, DomainError, LocalVolError
from .marketdata import MarketSnapshot, TenorQuote, VolTermStructure
from .pdepricer import CNSolution, PayoffSpec, build_mesh, cn_solve, default_steps
from .surface import SIGMA_CAP, ImpliedSurface, LocalVolGrid, build_localvol_grid

logger = logging.getLogger(__name__)

SCHEMES = ("bs", "lv_tc", "lv_sticky")


@dataclass(frozen=True, eq=False)
class HedgePath:
    """Spot observations at the rebalancing times with the accrual rates in force."""

    times: np.ndarray
    spots: np.ndarray
    rates: np.ndarray
    divs: np.ndarray
    source: str = "simulated"

    def __post_init__(self):
        n = self.spots.size
        if n < 2:
            raise DomainError("a hedge path needs at least two observations")
        if self.times.size != n or self.rates.size < n - 1 or self.divs.size < n - 1:
            raise DomainError("hedge path arrays have inconsistent lengths")
        if np.any(~(self.spots > 0)):
            raise DomainError("spots must be positive")

    @property
    def N(self) -> int:
        return self.spots.size - 1

    @property
    def dt(self) -> float:
        return float(self.times[-1] - self.times[0]) / self.N

    @classmethod
    def from_spots(cls, spots, T, rate=0.0, div=0.0, source="simulated") -> "HedgePath":
        spots = np.asarray(spots, dtype=float)
        n = spots.size - 1
        times = np.linspace(0.0, T, n + 1)
        return cls(times, spots, np.full(n + 1, float(rate)), np.full(n + 1, float(div)), source)


@dataclass(frozen=True, eq=False)
class HedgeLedger:
    premium: float
    strike: float
    side: str
    deltas: np.ndarray
    cash: np.ndarray
    payoff: float
    hedging_error: float


def cash_positions(spots, deltas, premium, rates, divs, dt):
    """Cash account after each rebalance of a short option hedged with ``deltas``.

    Time runs along axis 0; trailing axes (e.g. many paths) broadcast. The
    last entry is the cash after unwinding the stock at expiry.
    """
    spots = np.asarray(spots, dtype=float)
    deltas = np.asarray(deltas, dtype=float)
    n = deltas.shape[0]
    if spots.shape[0] != n + 1:
        raise DomainError(f"need {n + 1} spots for {n} deltas, got {spots.shape[0]}")
    rates = np.broadcast_to(np.asarray(rates, dtype=float), (n,) if np.ndim(rates) == 0 else np.shape(rates))
    divs = np.broadcast_to(np.asarray(divs, dtype=float), (n,) if np.ndim(divs) == 0 else np.shape(divs))
    cash = np.empty_like(spots, dtype=float)
    cash[0] = premium - deltas[0] * spots[0]
    for i in range(1, n + 1):
        carry = np.exp(rates[i - 1] * dt)
        yld = np.exp(divs[i - 1] * dt) - 1.0
        held = deltas[i - 1] * spots[i - 1]
        rebalance = deltas[i - 1] - deltas[i] if i < n else deltas[n - 1]
        cash[i] = carry * cash[i - 1] + yld * held + rebalance * spots[i]
    return cash


def hedge_path(path: HedgePath, premium: float, deltas, strike: float, side: str = "call") -> HedgeLedger:
    """Run the rebalancing recursion along one path; error is final cash minus payoff."""
    deltas = np.asarray(deltas, dtype=float)
    if deltas.size != path.N:
        raise DomainError(f"expected {path.N} deltas, got {deltas.size}")
    payoff_fn = PayoffSpec(side, strike)
    cash = cash_positions(path.spots, deltas, premium, path.rates[:path.N], path.divs[:path.N], path.dt)
    payoff = float(payoff_fn(path.spots[-1]))
    return HedgeLedger(float(premium), float(strike), side, deltas, cash, payoff, float(cash[-1] - payoff))


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


def _vol_at(vol, t):
    if isinstance(vol, VolTermStructure):
        return np.asarray(vol.instantaneous(t), dtype=float)
    if callable(vol):
        return np.asarray(vol(t), dtype=float)
    if not vol >= 0:
        raise DomainError("volatility must be non-negative")
    return np.full(np.shape(t), float(vol))


def gbm_paths(spot, mu, vol, T, N, n_paths=1, seed=None):
    """Log-Euler GBM paths, shape ``(n_paths, N + 1)``; ``vol`` may be a term structure."""
    if N < 1 or not T > 0 or not spot > 0:
        raise DomainError("gbm_paths needs N >= 1, T > 0, spot > 0")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_paths, N))
    dt = T / N
    sig = _vol_at(vol, np.arange(N) * dt)
    incr = (mu - 0.5 * sig * sig) * dt + sig * math.sqrt(dt) * z
    out = np.empty((n_paths, N + 1))
    out[:, 0] = spot
    out[:, 1:] = spot * np.exp(np.cumsum(incr, axis=1))
    return out


def lv_paths(spot, mu, grid: LocalVolGrid, T, N, n_paths=1, seed=None):
    """Paths whose step vol is read from ``grid`` at the current (spot, time)."""
    if N < 1 or not T > 0 or not spot > 0:
        raise DomainError("lv_paths needs N >= 1, T > 0, spot > 0")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_paths, N))
    dt = T / N
    out = np.empty((n_paths, N + 1))
    out[:, 0] = spot
    lo, hi = grid.prices[0], grid.prices[-1]
    clamped = 0
    for n in range(N):
        s = out[:, n]
        clamped += int(np.count_nonzero((s < lo) | (s > hi)))
        sig = grid.lookup(s, n * dt)
        out[:, n + 1] = s * np.exp((mu - 0.5 * sig * sig) * dt + sig * math.sqrt(dt) * z[:, n])
    if clamped:
        logger.warning("%d path points left the local vol grid; edge values used", clamped)
    return out


def simulate_gbm(spot, mu, vol, T, N, seed=None, rate=0.0, div=0.0) -> HedgePath:
    spots = gbm_paths(spot, mu, vol, T, N, 1, seed)[0]
    return HedgePath.from_spots(spots, T, rate, div)


def simulate_lv(spot, mu, grid: LocalVolGrid, T, N, seed=None, rate=0.0, div=0.0) -> HedgePath:
    spots = lv_paths(spot, mu, grid, T, N, 1, seed)[0]
    return HedgePath.from_spots(spots, T, rate, div)


@dataclass
class SimulationResult:
    premium: float
    errors: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.mean(self.errors))

    @property
    def std(self) -> float:
        return float(np.std(self.errors, ddof=1)) if self.errors.size > 1 else 0.0


def simulate_hedging(
    n_paths, vol, T, n_rebalance, spot=1.0, strike=None, side="call",
    rate=0.0, div=0.0, mu=None, scheme="bs", seed=None, gamma=7.0, grid_m=400,
) -> SimulationResult:
    """Monte Carlo hedging experiment under a constant (or term-structure) vol.

    ``scheme='bs'`` hedges with closed-form deltas; ``scheme='lv_tc'`` prices
    on a flat local vol grid and reads deltas from the CN solution at each
    rebalancing time.
    """
    strike = spot if strike is None else strike
    mu = rate - div if mu is None else mu
    N = int(n_rebalance)
    dt = T / N
    paths = gbm_paths(spot, mu, vol, T, N, n_paths, seed)
    if scheme == "bs":
        taus = T - np.arange(N) * dt
        sig = _avg_vol(vol, taus)
        premium = float(bs.price(side, spot, strike, T, rate, div, sig[0]))
        deltas = bs.delta(side, paths[:, :N], strike, taus, rate, div, sig)
    elif scheme == "lv_tc":
        if isinstance(vol, VolTermStructure) or callable(vol):
            raise DomainError("lv_tc simulation takes a constant vol")
        steps = N * math.ceil(default_steps(T) / N)
        mesh = build_mesh(spot, T, vol, gamma, grid_m, steps)
        sol = cn_solve(mesh, PayoffSpec(side, strike), LocalVolGrid.constant(mesh, vol), rate, div,
                       keep_history=True)
        premium, _ = sol.price_and_delta(spot)
        stride = steps // N
        deltas = np.empty((n_paths, N))
        for i in range(N):
            deltas[:, i] = sol.at_step(i * stride).price_and_delta(paths[:, i])[1]
    else:
        raise DomainError(f"unsupported simulation scheme {scheme!r}")
    cash = cash_positions(paths.T, deltas.T, premium, rate, div, dt)
    payoff = PayoffSpec(side, strike)(paths[:, -1])
    return SimulationResult(float(premium), cash[-1] - payoff)


def _avg_vol(vol, taus):
    if isinstance(vol, VolTermStructure):
        return np.asarray(vol.average(taus), dtype=float)
    return np.full(np.shape(taus), float(vol))


# ---------------------------------------------------------------------------
# Historical backtests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BacktestConfig:
    scheme: str = "bs"
    label: str = "ATM"
    tenor: float = 1.0 / 52
    side: str = "call"
    bump: float = 0.001
    gamma: float = 7.0
    grid_m: int = 400
    sigma_cap: float = SIGMA_CAP

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise DomainError(f"scheme must be one of {SCHEMES}")
        if self.label not in ("P10", "P25", "ATM", "C25", "C10"):
            raise DomainError(f"unknown smile label {self.label!r}")
        if not self.bump > 0:
            raise DomainError("bump fraction must be positive")
        if self.side not in ("call", "put"):
            raise DomainError(f"unknown option side {self.side!r}")


def _window_dt(snapshots, T):
    if len(snapshots) < 2:
        raise DataError("backtest window needs at least two snapshots")
    return T / (len(snapshots) - 1)


def bs_backtest_deltas(snapshots, K, T, side="call"):
    """Premium and daily deltas from term-structure Black-Scholes on each day's data."""
    dt = _window_dt(snapshots, T)
    N = len(snapshots) - 1
    deltas = np.empty(N)
    premium = None
    for i in range(N):
        snap = snapshots[i]
        tau = T - i * dt
        rd = snap.dom_curve.average(tau)
        rf = snap.for_curve.average(tau)
        sig = snap.atm_vols.average(tau)
        if i == 0:
            premium = float(bs.price(side, snap.spot, K, tau, rd, rf, sig))
        deltas[i] = bs.delta(side, snap.spot, K, tau, rd, rf, sig)
    return premium, deltas


def _lv_solve(snap: MarketSnapshot, K, side, T_rem, n_slices, cfg: BacktestConfig) -> tuple:
    """CN solve on one day's local vol; returns the solution and the step landing one day later."""
    steps = n_slices * math.ceil(default_steps(T_rem) / n_slices)
    mesh = build_mesh(snap.spot, T_rem, snap.theta_bar, cfg.gamma, cfg.grid_m, steps)
    grid = build_localvol_grid(ImpliedSurface(snap), mesh, cfg.sigma_cap)
    sol = cn_solve(mesh, PayoffSpec(side, K), grid, snap.dom_curve, snap.for_curve,
                   keep_history=n_slices > 1)
    return sol, steps // n_slices


def lv_tc_deltas(snapshots, K, T, side="call", cfg: BacktestConfig | None = None):
    """Deltas holding yesterday's local vol fixed while spot moves.

    Day ``i`` uses day ``i-1``'s CN solution read at the time of day ``i``
    and evaluated at the new spot.
    """
    cfg = cfg or BacktestConfig(scheme="lv_tc")
    dt = _window_dt(snapshots, T)
    N = len(snapshots) - 1
    deltas = np.empty(N)
    sol0, stride0 = _lv_solve(snapshots[0], K, side, T, N, cfg)
    premium, deltas[0] = sol0.price_and_delta(snapshots[0].spot)
    prev, stride = sol0, stride0
    for i in range(1, N):
        if i > 1:
            prev, stride = _lv_solve(snapshots[i - 1], K, side, T - (i - 1) * dt, N - i + 1, cfg)
        deltas[i] = prev.at_step(stride).price_and_delta(snapshots[i].spot)[1]
    return float(premium), deltas


def _bumped_pair(snap, K, side, T_rem, n_slices, cfg):
    up, stride = _lv_solve(snap.with_spot(snap.spot * (1 + cfg.bump)), K, side, T_rem, n_slices, cfg)
    dn, _ = _lv_solve(snap.with_spot(snap.spot * (1 - cfg.bump)), K, side, T_rem, n_slices, cfg)
    return up, dn, stride


def _central(up: CNSolution, dn: CNSolution, s, ds):
    return (up.price_and_delta(s + ds)[0] - dn.price_and_delta(s - ds)[0]) / (2 * ds)


def lv_sticky_deltas(snapshots, K, T, side="call", cfg: BacktestConfig | None = None):
    """Central-difference deltas where the market (strikes by delta) moves with spot.

    Each bumped market re-solves its strikes at spot ``S(1 +/- bump)`` with
    vols, deltas and rates unchanged; its price is read at the correspondingly
    bumped evaluation spot.
    """
    cfg = cfg or BacktestConfig(scheme="lv_sticky")
    dt = _window_dt(snapshots, T)
    N = len(snapshots) - 1
    deltas = np.empty(N)
    s0 = snapshots[0].spot
    base, _ = _lv_solve(snapshots[0], K, side, T, 1, cfg)
    premium = base.price_and_delta(s0)[0]
    up, dn, stride = _bumped_pair(snapshots[0], K, side, T, N, cfg)
    deltas[0] = _central(up, dn, s0, cfg.bump * s0)
    for i in range(1, N):
        if i > 1:
            up, dn, stride = _bumped_pair(snapshots[i - 1], K, side, T - (i - 1) * dt, N - i + 1, cfg)
        ds = cfg.bump * snapshots[i - 1].spot
        deltas[i] = _central(up.at_step(stride), dn.at_step(stride), snapshots[i].spot, ds)
    return float(premium), deltas


def scheme_deltas(snapshots, K, T, cfg: BacktestConfig):
    if cfg.scheme == "bs":
        return bs_backtest_deltas(snapshots, K, T, cfg.side)
    if cfg.scheme == "lv_tc":
        return lv_tc_deltas(snapshots, K, T, cfg.side, cfg)
    return lv_sticky_deltas(snapshots, K, T, cfg.side, cfg)


def historical_path(snapshots, T) -> HedgePath:
    """Spots of a backtest window with each day's first-pillar rates for accrual."""
    N = len(snapshots) - 1
    times = np.arange(N + 1) * (T / N)
    spots = np.array([s.spot for s in snapshots])
    rates = np.array([s.dom_curve.instantaneous(0.0) for s in snapshots])
    divs = np.array([s.for_curve.instantaneous(0.0) for s in snapshots])
    return HedgePath(times, spots, rates, divs, "historical")


def expiry_index(series, start: int, tenor: float) -> int | None:
    """Index of the first snapshot on or after the calendar expiry, or None."""
    expiry = series[start].date + _dt.timedelta(days=round(tenor * 365))
    for k in range(start + 1, len(series)):
        if series[k].date >= expiry:
            return k
    return None


@dataclass(frozen=True)
class BacktestRecord:
    start_date: _dt.date
    scheme: str
    label: str
    tenor: float
    strike: float
    premium: float
    error: float


@dataclass
class BacktestResult:
    records: list
    ledgers: list
    failures: list = field(default_factory=list)

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.records])

    @property
    def mean(self) -> float:
        return float(np.mean(self.errors))

    @property
    def std(self) -> float:
        e = self.errors
        return float(np.std(e, ddof=1)) if e.size > 1 else 0.0


def run_backtest(series, cfg: BacktestConfig, max_starts: int | None = None) -> BacktestResult:
    """Write one option per admissible start date and hedge it to expiry.

    Start dates roll daily. Windows that raise a package error are skipped
    and listed in ``failures``.
    """
    series = sorted(series, key=lambda s: s.date)
    records, ledgers, failures = [], [], []
    for start in range(len(series)):
        if max_starts is not None and len(records) + len(failures) >= max_starts:
            break
        end = expiry_index(series, start, cfg.tenor)
        if end is None:
            break
        window = series[start:end + 1]
        try:
            T = window[0].quote(cfg.tenor).tenor
            K = window[0].label_strike(cfg.label, T)
            premium, deltas = scheme_deltas(window, K, T, cfg)
            ledger = hedge_path(historical_path(window, T), premium, deltas, K, cfg.side)
        except LocalVolError as exc:
            logger.warning("%s: start date skipped: %s", window[0].date, exc)
            failures.append((window[0].date, str(exc)))
            continue
        ledgers.append(ledger)
        records.append(BacktestRecord(window[0].date, cfg.scheme, cfg.label, T, K, premium,
                                      ledger.hedging_error))
    if not records and not failures:
        raise DataError("insufficient data for a single option lifetime")
    if failures:
        logger.warning("%d start dates failed and were skipped", len(failures))
    return BacktestResult(records, ledgers, failures)


# ---------------------------------------------------------------------------
# Synthetic markets
# ---------------------------------------------------------------------------

STANDARD_TENORS = (1 / 52, 1 / 12, 2 / 12, 3 / 12, 6 / 12, 1.0, 2.0, 3.0, 4.0, 5.0)


def weekdays(start: _dt.date, n: int) -> list:
    out, d = [], start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += _dt.timedelta(days=1)
    return out


def synthetic_history(
    n_days, spot=0.7735, vol=0.10, rate_d=0.0, rate_f=0.0, realized_vol=None, mu=0.0,
    tenors=STANDARD_TENORS, start=_dt.date(2005, 1, 3), seed=None, days_per_year=260,
) -> list:
    """Weekday snapshots with a flat smile and flat curves over a GBM spot path."""
    realized_vol = vol if realized_vol is None else realized_vol
    dates = weekdays(start, n_days)
    T = (n_days - 1) / days_per_year
    if n_days > 1:
        spots = gbm_paths(spot, mu, realized_vol, T, n_days - 1, 1, seed)[0]
    else:
        spots = np.array([spot])
    quotes = tuple(TenorQuote(t, vol, 0.0, 0.0, 0.0, 0.0, rate_d, rate_f) for t in tenors)
    return [MarketSnapshot(d, float(s), quotes) for d, s in zip(dates, spots)]
