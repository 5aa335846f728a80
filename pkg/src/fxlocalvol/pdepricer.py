"""Crank-Nicolson pricing of European vanillas on a uniform log-price mesh."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError
from .linalg import tridiag_solve
from .marketdata import VolTermStructure, ZeroCurve
from .surface import CubicSpline, LocalVolGrid

__all__ = [
    "Mesh", "PayoffSpec", "CNSolution", "build_mesh", "default_steps",
    "tridiag_solve", "cn_solve", "price_and_delta",
]


def default_steps(T: float) -> int:
    """Time steps scale with maturity: round(500 T + 500)."""
    return int(math.floor(500.0 * T + 500.0 + 0.5))


@dataclass(frozen=True, eq=False)
class Mesh:
    spot: float
    T: float
    theta_bar: float
    gamma: float
    M: int
    N: int
    D: float
    dt: float
    dx: float
    times: np.ndarray
    log_prices: np.ndarray
    prices: np.ndarray

    @property
    def center(self) -> int:
        return self.M // 2


def build_mesh(spot, T, theta_bar, gamma=7.0, M=400, N=None) -> Mesh:
    """Uniform log-price mesh of half-width ``gamma * theta_bar * sqrt(T)`` centred on spot.

    ``N`` overrides the default step count, e.g. to land on rebalancing dates.
    """
    if not (spot > 0 and T > 0 and theta_bar > 0 and gamma > 0):
        raise DomainError("mesh needs spot, T, theta_bar and gamma positive")
    if M % 2 or M < 50:
        raise DomainError(f"M must be even and >= 50 so spot is a node, got {M}")
    N = default_steps(T) if N is None else int(N)
    if N < 1:
        raise DomainError("mesh needs at least one time step")
    D = gamma * theta_bar * math.sqrt(T)
    dx = 2.0 * D / M
    # offsets from the centre keep log(spot) exact at j = M/2
    x = math.log(spot) + (np.arange(M + 1) - M // 2) * dx
    prices = spot * np.exp((np.arange(M + 1) - M // 2) * dx)
    dt = T / N
    times = np.arange(N + 1) * dt
    times[-1] = T
    return Mesh(float(spot), float(T), float(theta_bar), float(gamma), int(M), N, D, dt, dx,
                times, x, prices)


@dataclass(frozen=True)
class PayoffSpec:
    side: str
    strike: float

    def __post_init__(self):
        if self.side not in ("call", "put"):
            raise DomainError(f"unknown option side {self.side!r}")
        if not self.strike > 0:
            raise DomainError("strike must be positive")

    @property
    def slope_low(self) -> float:
        return 0.0 if self.side == "call" else -1.0

    @property
    def slope_high(self) -> float:
        return 1.0 if self.side == "call" else 0.0

    def __call__(self, s):
        if self.side == "call":
            return np.maximum(s - self.strike, 0.0)
        return np.maximum(self.strike - s, 0.0)


@dataclass(frozen=True, eq=False)
class CNSolution:
    """Price slice at one mesh time with its natural-spline interpolant.

    ``history`` (when kept) holds every slice, row ``i`` at ``mesh.times[i]``.
    """

    mesh: Mesh
    payoff: PayoffSpec
    values: np.ndarray
    spline: CubicSpline
    time_index: int = 0
    history: np.ndarray | None = None

    def at_step(self, i: int) -> "CNSolution":
        if self.history is None:
            raise DomainError("solution was computed without keep_history")
        v = self.history[i]
        return CNSolution(self.mesh, self.payoff, v, CubicSpline(self.mesh.prices, v), i, self.history)

    def price_and_delta(self, s):
        return price_and_delta(self, s)


def _rate_fn(rate):
    if isinstance(rate, ZeroCurve):
        return lambda t: np.asarray(rate.instantaneous(t), dtype=float)
    if callable(rate):
        return lambda t: np.asarray(rate(t), dtype=float)
    return lambda t: np.full(np.shape(t), float(rate))


def _variance_table(mesh: Mesh, vol) -> np.ndarray:
    """sigma^2 at every node, shaped (N+1, M+1)."""
    shape = (mesh.times.size, mesh.prices.size)
    if isinstance(vol, LocalVolGrid):
        if vol.values.shape != (mesh.prices.size, mesh.times.size) or not (
            np.allclose(vol.times, mesh.times, rtol=0, atol=1e-12 * max(mesh.T, 1.0))
            and np.allclose(vol.prices, mesh.prices, rtol=1e-12, atol=0)
        ):
            raise DomainError("local vol grid does not match the pricing mesh")
        return np.square(vol.values.T)
    if isinstance(vol, VolTermStructure):
        var = np.asarray(vol.instantaneous_variance(mesh.times), dtype=float)
        return np.broadcast_to(var[:, None], shape)
    if callable(vol):
        sig = np.asarray(vol(mesh.times), dtype=float)
        return np.broadcast_to(np.square(sig)[:, None], shape)
    return np.full(shape, float(vol) ** 2)


def cn_solve(mesh: Mesh, payoff: PayoffSpec, vol, rate=0.0, div=0.0, keep_history=False) -> CNSolution:
    """Backward Crank-Nicolson induction from the payoff at ``T`` to ``t = 0``.

    ``vol`` is a :class:`LocalVolGrid` on ``mesh``, a constant, a
    :class:`VolTermStructure` or a callable of time. ``rate``/``div`` are
    constants, zero curves, or callables giving instantaneous rates.
    """
    var = _variance_table(mesh, vol)
    r = _rate_fn(rate)(mesh.times)
    q = _rate_fn(div)(mesh.times)
    dx, dt, M, N = mesh.dx, mesh.dt, mesh.M, mesh.N
    s = mesh.prices

    diff = var / (4 * dx * dx)  # sigma^2 / (4 dx^2)
    nu = (r - q)[:, None] - 0.5 * var
    b_all = diff + nu / (4 * dx)
    c_all = diff - nu / (4 * dx)
    a_all = r[:, None] / 2 + 1 / dt + 2 * diff
    d_all = 1 / dt - r[:, None] / 2 - 2 * diff

    bc_low = payoff.slope_low * (s[0] - s[1])
    bc_high = payoff.slope_high * (s[M] - s[M - 1])

    v = payoff(s).astype(float)
    history = np.empty((N + 1, M + 1)) if keep_history else None
    if keep_history:
        history[N] = v
    lower = np.empty(M)
    upper = np.empty(M)
    diag = np.empty(M + 1)
    rhs = np.empty(M + 1)
    for i in range(N, 0, -1):
        rhs[1:M] = d_all[i, 1:M] * v[1:M] + b_all[i, 1:M] * v[2:] + c_all[i, 1:M] * v[:M - 1]
        rhs[0], rhs[M] = bc_low, bc_high
        diag[1:M] = a_all[i - 1, 1:M]
        upper[1:] = -b_all[i - 1, 1:M]
        lower[:M - 1] = -c_all[i - 1, 1:M]
        diag[0], upper[0] = 1.0, -1.0
        diag[M], lower[M - 1] = 1.0, -1.0
        try:
            v = tridiag_solve(lower, diag, upper, rhs)
        except NumericalError as exc:
            raise NumericalError(f"Crank-Nicolson step {i} (t={mesh.times[i - 1]:.6g}): {exc}") from exc
        if keep_history:
            history[i - 1] = v
    return CNSolution(mesh, payoff, v, CubicSpline(s, v), 0, history)


def price_and_delta(sol: CNSolution, s):
    """Interpolated price and first derivative at spot ``s`` inside the mesh."""
    s_arr = np.asarray(s, dtype=float)
    lo, hi = sol.mesh.prices[0], sol.mesh.prices[-1]
    if np.any(s_arr < lo) or np.any(s_arr > hi):
        raise NumericalError(f"spot {s} outside mesh [{lo:.6g}, {hi:.6g}]; widen gamma")
    p, d = sol.spline(s_arr), sol.spline(s_arr, 1)
    if np.ndim(p) == 0:
        return float(p), float(d)
    return p, d
