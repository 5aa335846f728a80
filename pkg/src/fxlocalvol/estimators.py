"""scikit-learn style wrappers: fit on a market snapshot, predict on (strike, maturity) rows."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import DomainError
from .marketdata import MarketSnapshot
from .pdepricer import PayoffSpec, build_mesh, cn_solve
from .surface import SIGMA_CAP, ImpliedSurface, build_localvol_grid


def check_snapshot(snapshot) -> MarketSnapshot:
    if not isinstance(snapshot, MarketSnapshot):
        raise TypeError(f"expected a MarketSnapshot, got {type(snapshot).__name__}")
    return snapshot


def check_strike_maturity(X) -> np.ndarray:
    """Validate an ``(n, 2)`` array of ``(strike, maturity)`` rows."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != 2:
        raise DomainError(f"expected columns (strike, maturity), got {X.shape[1]} columns")
    if np.any(X[:, 0] <= 0) or np.any(X[:, 1] < 0):
        raise DomainError("strikes must be positive and maturities non-negative")
    return X


class ImpliedVolSurface(BaseEstimator):
    """Spline implied-vol surface; ``predict`` returns implied vols."""

    def fit(self, snapshot, y=None):
        self.surface_ = ImpliedSurface(check_snapshot(snapshot))
        self.tenors_ = self.surface_.tenors
        return self

    def predict(self, X):
        check_is_fitted(self, "surface_")
        X = check_strike_maturity(X)
        return self.surface_.theta(X[:, 0], X[:, 1])

    def derivatives(self, X):
        """Columns: theta, dtheta/dK, d2theta/dK2, dtheta/dT."""
        check_is_fitted(self, "surface_")
        X = check_strike_maturity(X)
        return np.column_stack(self.surface_.theta_and_derivs(X[:, 0], X[:, 1]))


class DupireLocalVol(BaseEstimator):
    def __init__(self, sigma_cap: float = SIGMA_CAP):
        self.sigma_cap = sigma_cap

    def fit(self, snapshot, y=None):
        self.surface_ = ImpliedSurface(check_snapshot(snapshot))
        return self

    def predict(self, X):
        check_is_fitted(self, "surface_")
        X = check_strike_maturity(X)
        return np.atleast_1d(self.surface_.local_vol(X[:, 0], X[:, 1], self.sigma_cap))

    def transform(self, mesh):
        """Local vol pre-evaluated on a pricing mesh."""
        check_is_fitted(self, "surface_")
        return build_localvol_grid(self.surface_, mesh, self.sigma_cap)


class LocalVolPricer(BaseEstimator):
    """Crank-Nicolson vanilla pricer under the snapshot's local vol."""

    def __init__(self, side: str = "call", gamma: float = 7.0, grid_m: int = 400,
                 sigma_cap: float = SIGMA_CAP):
        self.side = side
        self.gamma = gamma
        self.grid_m = grid_m
        self.sigma_cap = sigma_cap

    def fit(self, snapshot, y=None):
        self.snapshot_ = check_snapshot(snapshot)
        self.surface_ = ImpliedSurface(self.snapshot_)
        self._grids = {}
        return self

    def _grid(self, T):
        if T not in self._grids:
            snap = self.snapshot_
            mesh = build_mesh(snap.spot, T, snap.theta_bar, self.gamma, self.grid_m)
            self._grids[T] = (mesh, build_localvol_grid(self.surface_, mesh, self.sigma_cap))
        return self._grids[T]

    def price_and_delta(self, X):
        """``(n, 2)`` array of price and delta at today's spot."""
        check_is_fitted(self, "surface_")
        X = check_strike_maturity(X)
        out = np.empty((X.shape[0], 2))
        snap = self.snapshot_
        for k, (strike, T) in enumerate(X):
            mesh, grid = self._grid(float(T))
            sol = cn_solve(mesh, PayoffSpec(self.side, strike), grid, snap.dom_curve, snap.for_curve)
            out[k] = sol.price_and_delta(snap.spot)
        return out

    def predict(self, X):
        return self.price_and_delta(X)[:, 0]
