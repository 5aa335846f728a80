"""FX local volatility: quote handling, Dupire calibration, Crank-Nicolson pricing and hedging backtests."""

from .blackscholes import call_delta, call_price, implied_vol, put_delta, put_price
from .calibration import CalibrationReport, CalibrationRow, calibrate_check, calibrate_history
from .errors import (
    ConfigurationError, DataError, DomainError, LocalVolError, NumericalError, ParseError,
)
from .estimators import DupireLocalVol, ImpliedVolSurface, LocalVolPricer
from .hedging import (
    BacktestConfig, BacktestResult, HedgePath, cash_positions, hedge_path, run_backtest,
    simulate_hedging, synthetic_history,
)
from .marketdata import (
    MarketSnapshot, TenorQuote, VolTermStructure, ZeroCurve, parse_history, strike_from_delta,
    write_history,
)
from .pdepricer import PayoffSpec, build_mesh, cn_solve, price_and_delta
from .surface import CubicSpline, ImpliedSurface, LocalVolGrid, build_localvol_grid, dupire_local_vol

__version__ = "0.1.0"
