"""Closed-form Black-Scholes analytics with continuous yields.

All pricing functions broadcast over numpy arrays. ``rate`` is the average
domestic rate over the option life and ``div`` the average foreign rate
(or dividend yield).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri

from .errors import DomainError, NumericalError

_INV_SQRT_2PI = 0.3989422804014327

VOL_BRACKET = (1e-6, 5.0)


def norm_cdf(x):
    """Standard normal CDF."""
    return ndtr(x)


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def norm_inv_cdf(p):
    """Inverse standard normal CDF, refined by one Newton step on :func:`norm_cdf`."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(~(p_arr > 0.0)) or np.any(~(p_arr < 1.0)):
        raise DomainError(f"probability must lie in (0, 1), got {p}")
    # refine in the lower tail, where ndtr keeps full relative precision; 1 - p is exact for p >= 0.5
    upper = p_arr > 0.5
    tail = np.where(upper, 1.0 - p_arr, p_arr)
    z = ndtri(tail)
    z = z - (ndtr(z) - tail) / norm_pdf(z)
    return _scalar(np.where(upper, -z, z))


def _check(spot, strike, T, vol, allow_zero_vol=True):
    if np.any(~(np.asarray(spot) > 0)):
        raise DomainError("spot must be positive")
    if np.any(~(np.asarray(strike) > 0)):
        raise DomainError("strike must be positive")
    if np.any(~(np.asarray(T) > 0)):
        raise DomainError("maturity must be positive")
    vol = np.asarray(vol)
    if allow_zero_vol:
        if np.any(~(vol >= 0)):
            raise DomainError("volatility must be non-negative")
    elif np.any(~(vol > 0)):
        raise DomainError("volatility must be positive for delta")


def d1(spot, strike, T, rate, div, vol):
    return (np.log(spot / strike) + (rate - div + 0.5 * vol * vol) * T) / (vol * np.sqrt(T))


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def call_price(spot, strike, T, rate, div, vol):
    """European call price; ``vol == 0`` returns the discounted forward intrinsic."""
    _check(spot, strike, T, vol)
    spot, strike, T, rate, div, vol = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (spot, strike, T, rate, div, vol))
    )
    fwd_leg = spot * np.exp(-div * T)
    strike_leg = strike * np.exp(-rate * T)
    with np.errstate(divide="ignore", invalid="ignore"):
        dd1 = d1(spot, strike, T, rate, div, vol)
        price = fwd_leg * ndtr(dd1) - strike_leg * ndtr(dd1 - vol * np.sqrt(T))
    price = np.where(vol > 0, price, np.maximum(fwd_leg - strike_leg, 0.0))
    return _scalar(np.maximum(price, 0.0))


def put_price(spot, strike, T, rate, div, vol):
    """European put via put-call parity."""
    c = np.asarray(call_price(spot, strike, T, rate, div, vol))
    T = np.asarray(T, dtype=float)
    p = c - np.asarray(spot) * np.exp(-np.asarray(div) * T) + np.asarray(strike) * np.exp(
        -np.asarray(rate) * T
    )
    return _scalar(np.maximum(p, 0.0))


def call_delta(spot, strike, T, rate, div, vol):
    _check(spot, strike, T, vol, allow_zero_vol=False)
    return _scalar(np.exp(-np.asarray(div) * T) * ndtr(d1(spot, strike, T, rate, div, vol)))


def put_delta(spot, strike, T, rate, div, vol):
    _check(spot, strike, T, vol, allow_zero_vol=False)
    dd1 = d1(spot, strike, T, rate, div, vol)
    # Φ(d1) - 1 == -Φ(-d1), computed without cancellation
    return _scalar(-np.exp(-np.asarray(div) * T) * ndtr(-dd1))


def price(side: str, *args):
    if side == "call":
        return call_price(*args)
    if side == "put":
        return put_price(*args)
    raise DomainError(f"unknown option side {side!r}")


def delta(side: str, *args):
    if side == "call":
        return call_delta(*args)
    if side == "put":
        return put_delta(*args)
    raise DomainError(f"unknown option side {side!r}")


def implied_vol(target_price, spot, strike, T, rate, div, side="call", max_iter=200):
    """Volatility reproducing ``target_price``, found by Brent's bracketed search.

    Raises DomainError when the price violates the no-arbitrage bounds and
    NumericalError when no root exists in the search bracket.
    """
    _check(spot, strike, T, 0.0)
    fwd_leg = spot * np.exp(-div * T)
    strike_leg = strike * np.exp(-rate * T)
    if side == "call":
        lower, upper = max(fwd_leg - strike_leg, 0.0), fwd_leg
    elif side == "put":
        lower, upper = max(strike_leg - fwd_leg, 0.0), strike_leg
    else:
        raise DomainError(f"unknown option side {side!r}")
    if not (lower < target_price < upper):
        raise DomainError(
            f"price out of bounds: {target_price!r} not in ({lower!r}, {upper!r})"
        )

    def objective(vol):
        return price(side, spot, strike, T, rate, div, vol) - target_price

    lo, hi = VOL_BRACKET
    f_lo, f_hi = objective(lo), objective(hi)
    if f_lo > 0 or f_hi < 0:
        raise NumericalError(
            f"implied vol for price {target_price!r} lies outside [{lo}, {hi}]"
        )
    if f_lo == 0:
        return lo
    try:
        vol, info = brentq(
            objective, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps,
            maxiter=max_iter, full_output=True, disp=False,
        )
    except RuntimeError as exc:  # pragma: no cover - brentq with disp=False
        raise NumericalError(str(exc)) from exc
    if not info.converged:
        raise NumericalError(f"implied vol did not converge in {max_iter} iterations")
    return float(vol)


@dataclass(frozen=True)
class BsInputs:
    """Inputs of the constant-parameter formula; rates and vol are term averages."""

    spot: float
    strike: float
    T: float
    rate: float = 0.0
    div: float = 0.0
    vol: float = 0.0

    def __post_init__(self):
        _check(self.spot, self.strike, self.T, self.vol)

    @property
    def args(self):
        return (self.spot, self.strike, self.T, self.rate, self.div, self.vol)

    def call_price(self) -> float:
        return call_price(*self.args)

    def put_price(self) -> float:
        return put_price(*self.args)

    def call_delta(self) -> float:
        return call_delta(*self.args)

    def put_delta(self) -> float:
        return put_delta(*self.args)
