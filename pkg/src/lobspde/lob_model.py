"""Order-book state, its three solution regimes and book observables.

The centred density ``u_t(x)`` lives on ``[-L, L]``: non-positive on the bid
side, non-negative on the ask side and zero at ``-L, 0, L``.

* two-factor regime (no order sources): ``u_t = V^b_t H^b_1 + V^a_t H^a_1`` with
  geometric Brownian factors;
* mean-reverting regime (sources ``Vbar H_1``): the factors solve
  ``dV = (Vbar - nu V) dt + sigma V dW``;
* general initial data: the principal-mode factor plus the stochastic
  exponential times the deterministic spectral evolution of the remainder.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from scipy import integrate

from . import price, sde_core, spectral
from .sde_core import LinearSDEParams, TimeGrid
from .spectral import SideParams

DEFAULT_BOOK_POINTS = 512

Scheme = Literal["exact", "milstein"]


@dataclass(frozen=True)
class ModelParams:
    bid: SideParams
    ask: SideParams
    sigma_b: float
    sigma_a: float
    rho_ab: float = 0.0
    theta: float = 0.01
    c_s: float = 0.5
    vbar_b: float = 0.0
    vbar_a: float = 0.0
    scaling_exponent_a: float = 1.0

    def __post_init__(self):
        if self.bid.side != "bid" or self.ask.side != "ask":
            raise ValueError("bid/ask side parameters are swapped")
        if not math.isclose(self.bid.L, self.ask.L):
            raise ValueError("both sides must share the half-width L")
        if not (self.sigma_b > 0 and self.sigma_a > 0):
            raise ValueError("sigma_b and sigma_a must be positive")
        if not -1.0 <= self.rho_ab <= 1.0:
            raise ValueError(f"rho_ab must lie in [-1, 1], got {self.rho_ab}")
        if not self.theta > 0:
            raise ValueError("tick size theta must be positive")
        if self.vbar_b < 0 or self.vbar_a < 0:
            raise ValueError("source intensities must be non-negative")
        if not self.scaling_exponent_a > 0:
            raise ValueError("scaling exponent must be positive")

    @classmethod
    def from_rates(cls, nu_b: float, nu_a: float, sigma_b: float, sigma_a: float,
                   rho_ab: float = 0.0, *, L: float = math.pi, eta: float = 1.0,
                   gamma_b: float = 0.0, gamma_a: float = 0.0, **kw) -> "ModelParams":
        """Build parameters from principal decay rates and shape coefficients."""
        bid = SideParams.with_rate(nu_b, eta=eta, beta=2 * eta * gamma_b, L=L, side="bid")
        ask = SideParams.with_rate(nu_a, eta=eta, beta=2 * eta * gamma_a, L=L, side="ask")
        return cls(bid=bid, ask=ask, sigma_b=sigma_b, sigma_a=sigma_a, rho_ab=rho_ab, **kw)

    @property
    def L(self) -> float:
        return self.ask.L

    @property
    def nu_b(self) -> float:
        return self.bid.nu1

    @property
    def nu_a(self) -> float:
        return self.ask.nu1

    @property
    def homogeneous(self) -> bool:
        return self.vbar_b == 0 and self.vbar_a == 0

    @property
    def depth_factor(self) -> float:
        """Depth per unit side volume, ``(pi / (2L)) theta^2``."""
        return math.pi / (2.0 * self.L) * self.theta ** 2

    def factor_sde(self, side: str) -> LinearSDEParams:
        if side == "bid":
            return LinearSDEParams(a=-self.nu_b, b=self.sigma_b, c=self.vbar_b)
        return LinearSDEParams(a=-self.nu_a, b=self.sigma_a, c=self.vbar_a)

    def mirrored(self) -> "ModelParams":
        return ModelParams(bid=self.ask.mirrored(), ask=self.bid.mirrored(),
                           sigma_b=self.sigma_a, sigma_a=self.sigma_b, rho_ab=self.rho_ab,
                           theta=self.theta, c_s=self.c_s, vbar_b=self.vbar_a,
                           vbar_a=self.vbar_b, scaling_exponent_a=self.scaling_exponent_a)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        d = dict(d)
        d["bid"] = SideParams(**d["bid"])
        d["ask"] = SideParams(**d["ask"])
        return cls(**d)


@dataclass(frozen=True)
class FactorState:
    """Side volumes and mid-price; volumes may be per-path arrays for ensembles."""

    v_a: float
    v_b: float
    s: float = 0.0

    def __post_init__(self):
        if not (np.all(np.asarray(self.v_a) > 0) and np.all(np.asarray(self.v_b) > 0)):
            raise ValueError("side volumes must be positive")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled factor paths; arrays are ``(n_paths, n + 1)`` (or 1-d for one path)."""

    grid: TimeGrid
    v_b: np.ndarray
    v_a: np.ndarray
    s: np.ndarray
    dw_b: np.ndarray
    dw_a: np.ndarray

    @property
    def n_paths(self) -> int:
        return 1 if self.v_a.ndim == 1 else self.v_a.shape[0]

    def path(self, i: int) -> "Trajectory":
        if self.v_a.ndim == 1:
            if i != 0:
                raise IndexError(i)
            return self
        return Trajectory(self.grid, self.v_b[i], self.v_a[i], self.s[i], self.dw_b[i], self.dw_a[i])

    def state(self, k: int, path: int = 0) -> FactorState:
        tr = self.path(path)
        return FactorState(v_a=float(tr.v_a[k]), v_b=float(tr.v_b[k]), s=float(tr.s[k]))

    def to_csv(self, path, path_index: int = 0) -> None:
        tr = self.path(path_index)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", "V_b", "V_a", "S"])
            for row in zip(self.grid.times, tr.v_b, tr.v_a, tr.s):
                w.writerow([f"{v:.17g}" for v in row])

    def to_json(self, path, path_index: int = 0) -> None:
        tr = self.path(path_index)
        doc = {"grid": asdict(self.grid), "V_b": tr.v_b.tolist(), "V_a": tr.v_a.tolist(),
               "S": tr.s.tolist()}
        Path(path).write_text(json.dumps(doc))

    def depth_series(self, p: ModelParams, path_index: int = 0):
        from .estimation import DepthSeries

        tr = self.path(path_index)
        k = p.depth_factor
        return DepthSeries(self.grid, k * tr.v_b, k * tr.v_a, tr.s)


@dataclass(frozen=True, eq=False)
class BookDensity:
    x_grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.x_grid.shape[-1] != self.values.shape[-1]:
            raise ValueError("values do not match x_grid")
        if self.x_grid.size % 2 == 0:
            raise ValueError("book grid needs an odd number of points with x = 0 in the middle")

    @property
    def L(self) -> float:
        return float(self.x_grid[-1])

    @property
    def mid(self) -> int:
        return self.x_grid.size // 2

    def bid(self) -> tuple[np.ndarray, np.ndarray]:
        m = self.mid
        return self.x_grid[:m + 1], self.values[..., :m + 1]

    def ask(self) -> tuple[np.ndarray, np.ndarray]:
        m = self.mid
        return self.x_grid[m:], self.values[..., m:]

    def volumes(self) -> tuple[np.ndarray, np.ndarray]:
        xb, ub = self.bid()
        xa, ua = self.ask()
        return (integrate.simpson(np.abs(ub), x=xb, axis=-1),
                integrate.simpson(np.abs(ua), x=xa, axis=-1))

    def sign_violation(self) -> float:
        """Largest violation of the sign and boundary constraints."""
        _, ub = self.bid()
        _, ua = self.ask()
        edge = np.abs(self.values[..., [0, self.mid, -1]])
        return float(max(np.max(ub, initial=0.0), -np.min(ua, initial=0.0), np.max(edge)))

    @classmethod
    def grid(cls, L: float, n_per_side: int = DEFAULT_BOOK_POINTS) -> np.ndarray:
        return np.concatenate([np.linspace(-L, 0.0, n_per_side + 1),
                               np.linspace(0.0, L, n_per_side + 1)[1:]])

    @classmethod
    def from_factors(cls, p: ModelParams, v_b, v_a, n_per_side: int = DEFAULT_BOOK_POINTS,
                     ) -> "BookDensity":
        x = cls.grid(p.L, n_per_side)
        hb, ha = principal_pair(p, x)
        v_b = np.asarray(v_b, dtype=float)[..., None]
        v_a = np.asarray(v_a, dtype=float)[..., None]
        return cls(x, v_b * hb + v_a * ha)

    def to_csv(self, path) -> None:
        if self.values.ndim != 1:
            raise ValueError("CSV export is defined for a single density")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "u"])
            for xv, uv in zip(self.x_grid, self.values):
                w.writerow([f"{xv:.17g}", f"{uv:.17g}"])


def principal_pair(p: ModelParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``H^b_1`` and ``H^a_1`` on the full book grid, each zero off its side."""
    hb = np.zeros_like(x)
    ha = np.zeros_like(x)
    mb = x <= 0
    ma = x >= 0
    hb[mb] = spectral.principal_density(p.bid, x[mb])
    ha[ma] = spectral.principal_density(p.ask, x[ma])
    return hb, ha


def correlated_increments(p: ModelParams, grid: TimeGrid, seed: int, n_paths: int,
                          path_offset: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """``(dW^b, dW^a)`` with ``W^a = W1`` and ``W^b = rho W1 + sqrt(1 - rho^2) W2``."""
    dw = sde_core.brownian_increments(grid, seed, n_paths, 2, path_offset=path_offset)
    dw_a = dw[:, 0, :]
    dw_b = p.rho_ab * dw[:, 0, :] + math.sqrt(max(0.0, 1.0 - p.rho_ab ** 2)) * dw[:, 1, :]
    return dw_b, dw_a


def _squeeze(n_paths: Optional[int], *arrays):
    if n_paths is None:
        return tuple(a[0] for a in arrays)
    return arrays


def _check_init(init: FactorState) -> None:
    if not (np.all(np.asarray(init.v_a) > 0) and np.all(np.asarray(init.v_b) > 0)):
        raise ValueError("initial volumes must be positive")


def simulate_two_factor(p: ModelParams, init: FactorState, grid: TimeGrid, seed: int,
                        n_paths: Optional[int] = None, path_offset: int = 0) -> Trajectory:
    """Two-factor book without order sources: geometric Brownian side volumes."""
    if not p.homogeneous:
        raise ValueError("two-factor regime requires vbar_b = vbar_a = 0")
    _check_init(init)
    m = 1 if n_paths is None else n_paths
    dw_b, dw_a = correlated_increments(p, grid, seed, m, path_offset)
    wb = sde_core.driver_from_increments(grid, dw_b)
    wa = sde_core.driver_from_increments(grid, dw_a)
    v_b = sde_core.solve_linear_sde(p.factor_sde("bid"), wb, init.v_b)
    v_a = sde_core.solve_linear_sde(p.factor_sde("ask"), wa, init.v_a)
    dx_b = -p.nu_b * grid.dt + p.sigma_b * dw_b
    dx_a = -p.nu_a * grid.dt + p.sigma_a * dw_a
    s = price.accumulate(init.s, price.price_increment(p, dx_b, dx_a))
    return Trajectory(grid, *_squeeze(n_paths, v_b, v_a, s, dw_b, dw_a))


def simulate_mean_reverting(p: ModelParams, init: FactorState, grid: TimeGrid, seed: int,
                            n_paths: Optional[int] = None, path_offset: int = 0,
                            scheme: Scheme = "exact", substeps: int = 1) -> Trajectory:
    """Book with order sources ``Vbar H_1``: mean-reverting side volumes.

    ``substeps`` refines the simulation grid; paths are returned on ``grid``.
    The mid-price accumulates ``c_s theta (dV^b/V^b - dV^a/V^a)`` on the fine
    grid with left-point (Ito) increments.
    """
    if p.vbar_b <= 0 or p.vbar_a <= 0:
        raise ValueError("mean-reverting regime requires positive source intensities")
    _check_init(init)
    if p.nu_b <= 0 or p.nu_a <= 0:
        warnings.warn("nu <= 0: the factors have no invariant law; stationarity "
                      "diagnostics do not apply", RuntimeWarning, stacklevel=2)
    if scheme not in ("exact", "milstein"):
        raise ValueError(f"unknown scheme {scheme!r}")
    m = 1 if n_paths is None else n_paths
    fine = TimeGrid(grid.t0, grid.dt / substeps, grid.n_steps * substeps)
    dw_b, dw_a = correlated_increments(p, fine, seed, m, path_offset)
    solve = sde_core.solve_linear_sde if scheme == "exact" else sde_core.milstein_linear_sde
    v_b = solve(p.factor_sde("bid"), sde_core.driver_from_increments(fine, dw_b), init.v_b)
    v_a = solve(p.factor_sde("ask"), sde_core.driver_from_increments(fine, dw_a), init.v_a)
    dt = fine.dt
    dx_b = (p.vbar_b / v_b[:, :-1] - p.nu_b) * dt + p.sigma_b * dw_b
    dx_a = (p.vbar_a / v_a[:, :-1] - p.nu_a) * dt + p.sigma_a * dw_a
    s = price.accumulate(init.s, price.price_increment(p, dx_b, dx_a))
    if substeps > 1:
        sl = slice(None, None, substeps)
        v_b, v_a, s = v_b[:, sl], v_a[:, sl], s[:, sl]
        dw_b = dw_b.reshape(m, grid.n_steps, substeps).sum(axis=-1)
        dw_a = dw_a.reshape(m, grid.n_steps, substeps).sum(axis=-1)
    return Trajectory(grid, *_squeeze(n_paths, v_b, v_a, s, dw_b, dw_a))


@dataclass(frozen=True, eq=False)
class BookPath:
    """Book densities ``values[path, time, x]`` at ``times`` plus the side factors."""

    x_grid: np.ndarray
    times: np.ndarray
    values: np.ndarray
    v_b: np.ndarray
    v_a: np.ndarray
    exp_b: np.ndarray
    exp_a: np.ndarray
    h_b: np.ndarray
    h_a: np.ndarray

    def density(self, time_index: int, path: int = 0) -> BookDensity:
        return BookDensity(self.x_grid, self.values[path, time_index])

    def principal_part(self) -> np.ndarray:
        return self.v_b[..., None] * self.h_b + self.v_a[..., None] * self.h_a


def _side_split(u0: BookDensity, side: SideParams):
    return u0.bid() if side.side == "bid" else u0.ask()


def simulate_general_initial(p: ModelParams, u0: BookDensity, grid: TimeGrid, K: int, seed: int,
                             n_paths: Optional[int] = None, path_offset: int = 0,
                             sample_every: int = 1) -> BookPath:
    """Book evolution from arbitrary sign-constrained initial data.

    Per side ``u_t = V_t H_1 + E_t(sigma W) sum_k exp(-nu_k t) <u0 - V_0 H_1, h_k> h_k``
    where ``V_0`` is the principal-mode content of ``u0`` and ``V`` is the
    factor of the two-factor (no sources) or mean-reverting regime, driven by
    the same noise as :func:`simulate_two_factor`.
    """
    if K < 1:
        raise ValueError("truncation order must be >= 1")
    if not math.isclose(u0.L, p.L):
        raise ValueError("initial density grid does not span [-L, L]")
    if u0.sign_violation() > 1e-12 * max(1.0, float(np.max(np.abs(u0.values)))):
        raise ValueError("initial density violates the sign constraints")
    m = 1 if n_paths is None else n_paths
    dw_b, dw_a = correlated_increments(p, grid, seed, m, path_offset)
    idx = np.arange(0, grid.n_steps + 1, sample_every)
    times = grid.elapsed[idx]
    x = u0.x_grid
    out = np.zeros((m, idx.size, x.size))
    factors, exps, principals = {}, {}, {}
    for side, dw in ((p.bid, dw_b), (p.ask, dw_a)):
        name = side.side
        xs, us = _side_split(u0, side)
        h1 = spectral.principal_density(side, xs)
        v0 = spectral.weighted_inner_product(us, spectral.eigenfunction(side, 1, xs), side, xs)
        v0 *= spectral.principal_normalizer(side)
        if v0 <= 0:
            raise ValueError(f"initial {name} density has no positive principal component")
        rest = spectral.expand(us - v0 * h1, side, K, xs)
        w = sde_core.driver_from_increments(grid, dw)
        e = sde_core.stochastic_exponential(w.scaled(p.sigma_b if name == "bid" else p.sigma_a))
        v = sde_core.solve_linear_sde(p.factor_sde(name), w, v0)
        det = np.stack([spectral.evolve(rest, t).reconstruct(xs) for t in times])
        vals = v[:, idx, None] * h1 + e[:, idx, None] * det
        sl = slice(0, xs.size) if name == "bid" else slice(x.size - xs.size, x.size)
        out[:, :, sl] = vals
        factors[name], exps[name] = v[:, idx], e[:, idx]
        full = np.zeros_like(x)
        full[sl] = h1
        principals[name] = full
    # mid-point belongs to both sides and is zero on each
    out[:, :, u0.mid] = 0.0
    return BookPath(x, times, out, factors["bid"], factors["ask"], exps["bid"], exps["ask"],
                    principals["bid"], principals["ask"])


def depth(p: ModelParams, st: FactorState) -> tuple[float, float]:
    """Top-of-book depths ``(D^b, D^a) = (pi / (2L)) theta^2 (V^b, V^a)``."""
    k = p.depth_factor
    return k * st.v_b, k * st.v_a


def volume_and_imbalance(p: ModelParams, st: FactorState) -> tuple[float, float]:
    """Total volume ``V^b + V^a`` and depth imbalance ``D^b - D^a``."""
    d_b, d_a = depth(p, st)
    return st.v_b + st.v_a, d_b - d_a


def balance_condition(p: ModelParams) -> tuple[float, float]:
    """Per-side residual ``alpha - eta pi^2 / L^2 - beta^2 / (4 eta)`` (bid, ask)."""
    return -p.bid.nu1, -p.ask.nu1


def stationary_volume_mean(p: ModelParams) -> float:
    """Long-run mean of ``V^b + V^a`` in the mean-reverting regime."""
    return p.vbar_b / p.nu_b + p.vbar_a / p.nu_a
