"""Natural cubic splines, the implied-vol surface and Dupire local volatility.

The implied surface is built exactly as market desks read FX quotes: one
natural spline in absolute strike per quoted tenor, then natural splines
across tenors for the value and each strike derivative. Every spline is
extended linearly beyond its end knots.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .linalg import tridiag_solve
from .marketdata import MarketSnapshot

logger = logging.getLogger(__name__)

SIGMA_CAP = 5.0
DENOM_FLOOR = 1e-12


class CubicSpline:
    """Natural cubic spline with linear extrapolation outside the knots.

    ``y`` may be 2-D, one column per series sharing the same knots.
    """

    def __init__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 1 or x.size < 2:
            raise DomainError("spline needs at least 2 knots")
        if y.shape[0] != x.size:
            raise DomainError("knot and value arrays differ in length")
        h = np.diff(x)
        if not np.all(h > 0):
            raise DomainError("spline knots must be strictly increasing")
        m = np.zeros_like(y)
        if x.size > 2:
            slopes = np.diff(y, axis=0) / (h if y.ndim == 1 else h[:, None])
            rhs = 6.0 * np.diff(slopes, axis=0)
            m[1:-1] = tridiag_solve(h[1:-1], 2.0 * (h[:-1] + h[1:]), h[1:-1], rhs)
        self.x, self.y, self.m, self.h = x, y, m, h

    @property
    def knots(self):
        return self.x

    def __call__(self, x, nu: int = 0):
        """Value (``nu=0``), slope (``nu=1``) or curvature (``nu=2``) at ``x``."""
        x = np.asarray(x, dtype=float)
        xs = self.x
        i = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.size - 2)
        xc = np.clip(x, xs[0], xs[-1])
        h = self.h[i]
        a = (xs[i + 1] - xc) / h
        b = (xc - xs[i]) / h
        offset = x - xc
        outside = offset != 0
        if self.y.ndim > 1:
            a, b, h, offset, outside = (v[..., None] for v in (a, b, h, offset, outside))
        y0, y1, m0, m1 = self.y[i], self.y[i + 1], self.m[i], self.m[i + 1]
        slope = (y1 - y0) / h - (3 * a * a - 1) / 6 * h * m0 + (3 * b * b - 1) / 6 * h * m1
        if nu == 1:
            return slope
        if nu == 2:
            return np.where(outside, 0.0, a * m0 + b * m1)
        if nu != 0:
            raise DomainError("derivative order must be 0, 1 or 2")
        val = a * y0 + b * y1 + ((a ** 3 - a) * m0 + (b ** 3 - b) * m1) * h * h / 6
        return np.where(outside, val + slope * offset, val)


def spline_fit(points) -> CubicSpline:
    """Natural cubic spline through ``(x, y)`` pairs with increasing ``x``."""
    pts = np.asarray(points, dtype=float)
    return CubicSpline(pts[:, 0], pts[:, 1])


def spline_extrapolate(s: CubicSpline, x):
    """Spline value inside the knots, tangent line beyond them."""
    return s(x)


class ImpliedSurface:
    """Implied volatility ``theta(K, T)`` interpolated from one day's quotes."""

    def __init__(self, snapshot: MarketSnapshot):
        self.snapshot = snapshot
        self.spot = snapshot.spot
        self.tenors = snapshot.tenors
        self.smiles = [snapshot.smile(q) for q in snapshot.quotes]
        self.strike_splines = [
            CubicSpline([p.strike for p in pts], [p.implied_vol for p in pts])
            for pts in self.smiles
        ]
        # maturity splines are linear in their data: fit once to the identity
        self._basis = CubicSpline(self.tenors, np.eye(self.tenors.size))

    def _strike_slices(self, K):
        K = np.asarray(K, dtype=float)
        vals = np.stack([s(K) for s in self.strike_splines], axis=-1)
        d1 = np.stack([s(K, 1) for s in self.strike_splines], axis=-1)
        d2 = np.stack([s(K, 2) for s in self.strike_splines], axis=-1)
        return vals, d1, d2

    def theta_and_derivs(self, K, T):
        """``(theta, dtheta/dK, d2theta/dK2, dtheta/dT)`` at broadcast ``(K, T)``."""
        K, T = np.broadcast_arrays(np.asarray(K, dtype=float), np.asarray(T, dtype=float))
        vals, d1, d2 = self._strike_slices(K)
        w, wt = self._basis(T), self._basis(T, 1)
        theta = np.sum(w * vals, axis=-1)
        return theta, np.sum(w * d1, axis=-1), np.sum(w * d2, axis=-1), np.sum(wt * vals, axis=-1)

    def theta(self, K, T):
        return self.theta_and_derivs(K, T)[0]

    def theta_grid(self, K, T):
        """Outer-product evaluation; arrays shaped ``(len(T), len(K))``."""
        vals, d1, d2 = self._strike_slices(np.asarray(K, dtype=float))
        w, wt = self._basis(np.asarray(T, dtype=float)), self._basis(np.asarray(T, dtype=float), 1)
        return w @ vals.T, w @ d1.T, w @ d2.T, wt @ vals.T

    def rates(self, T):
        """Instantaneous domestic/foreign rates at ``T`` and the carry integral to ``T``."""
        dom, fgn = self.snapshot.dom_curve, self.snapshot.for_curve
        return (
            np.asarray(dom.instantaneous(T)),
            np.asarray(fgn.instantaneous(T)),
            np.asarray(dom.integral(T)) - np.asarray(fgn.integral(T)),
        )

    def local_vol(self, K, T, sigma_cap: float = SIGMA_CAP):
        r, q, carry = self.rates(T)
        return dupire_local_vol(self, K, T, r, q, carry, sigma_cap)


def theta_and_derivs(surf: ImpliedSurface, K, T):
    return surf.theta_and_derivs(K, T)


def local_variance(theta, theta_k, theta_kk, theta_t, K, T, r, q, carry, spot):
    """Dupire local variance from implied-vol derivatives, and its denominator.

    The numerator keeps the leading ``theta**2`` term so a flat surface maps
    to a flat local vol. ``d1 * sqrt(T)`` is used throughout so ``T = 0`` is
    admissible.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        d1_rt = (np.log(spot / K) + carry + 0.5 * theta * theta * T) / theta
        num = theta * theta + 2 * theta * T * theta_t + 2 * (r - q) * K * theta * T * theta_k
        den = (1 + K * d1_rt * theta_k) ** 2 + K * K * theta * T * (
            theta_kk - d1_rt * theta_k * theta_k
        )
        return num / den, den


def _clamp(var, den, theta, sigma_cap, where=""):
    singular = np.abs(den) < DENOM_FLOOR
    bad_theta = ~(theta > 0)
    n_neg = int(np.count_nonzero((var < 0) & ~singular))
    if np.any(singular):
        logger.warning("%d local-vol points with vanishing denominator%s; set to cap %g",
                       int(np.count_nonzero(singular)), where, sigma_cap)
    if np.any(bad_theta):
        logger.warning("%d points with non-positive implied vol%s; local vol set to 0",
                       int(np.count_nonzero(bad_theta)), where)
    if n_neg:
        logger.debug("%d negative local variances%s clamped to 0", n_neg, where)
    vol = np.sqrt(np.clip(np.nan_to_num(var, nan=0.0, posinf=sigma_cap ** 2), 0.0, None))
    vol = np.where(singular, sigma_cap, vol)
    vol = np.where(bad_theta, 0.0, vol)
    return np.minimum(vol, sigma_cap)


def dupire_local_vol(surf: ImpliedSurface, K, T, r, q, int_rq, sigma_cap: float = SIGMA_CAP):
    """Local volatility at ``(K, T)``; negative variance maps to 0, output capped."""
    K = np.asarray(K, dtype=float)
    T = np.asarray(T, dtype=float)
    if np.any(K <= 0) or np.any(T < 0):
        raise DomainError("local vol needs K > 0 and T >= 0")
    theta, tk, tkk, tt = surf.theta_and_derivs(K, T)
    var, den = local_variance(theta, tk, tkk, tt, K, T, r, q, int_rq, surf.spot)
    out = _clamp(var, den, theta, sigma_cap)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class LocalVolGrid:
    """Local vol pre-evaluated on a pricing mesh; ``values[j, i] = sigma(s_j, t_i)``."""

    times: np.ndarray
    prices: np.ndarray
    values: np.ndarray
    sigma_cap: float = SIGMA_CAP

    def __post_init__(self):
        if self.values.shape != (self.prices.size, self.times.size):
            raise DomainError("local vol grid shape does not match its axes")

    @classmethod
    def constant(cls, mesh, vol: float) -> "LocalVolGrid":
        return cls(mesh.times, mesh.prices, np.full((mesh.prices.size, mesh.times.size), float(vol)))

    def lookup(self, s, t):
        """Bilinear interpolation in (log-price, time), clamped to the grid edges."""
        s = np.asarray(s, dtype=float)
        x = np.log(self.prices)
        xs = np.clip(np.log(s), x[0], x[-1])
        ts = np.clip(np.asarray(t, dtype=float), self.times[0], self.times[-1])
        j = np.clip(np.searchsorted(x, xs, side="right") - 1, 0, x.size - 2)
        i = np.clip(np.searchsorted(self.times, ts, side="right") - 1, 0, self.times.size - 2)
        wx = (xs - x[j]) / (x[j + 1] - x[j])
        wt = (ts - self.times[i]) / (self.times[i + 1] - self.times[i])
        v = self.values
        lo = v[j, i] + wx * (v[j + 1, i] - v[j, i])
        hi = v[j, i + 1] + wx * (v[j + 1, i + 1] - v[j, i + 1])
        return lo + wt * (hi - lo)


def build_localvol_grid(surf: ImpliedSurface, mesh, sigma_cap: float = SIGMA_CAP) -> LocalVolGrid:
    """Evaluate local vol at every mesh node (the t = 0 column uses T -> 0 extrapolation)."""
    times, prices = mesh.times, mesh.prices
    theta, tk, tkk, tt = surf.theta_grid(prices, times)
    r, q, carry = (np.asarray(a)[:, None] for a in surf.rates(times))
    K, T = prices[None, :], times[:, None]
    var, den = local_variance(theta, tk, tkk, tt, K, T, r, q, carry, surf.spot)
    vol = _clamp(var, den, theta, sigma_cap, where=f" on {surf.snapshot.date} grid")
    return LocalVolGrid(times, prices, np.ascontiguousarray(vol.T), sigma_cap)
