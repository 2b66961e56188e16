"""Mid-price dynamics, price-coordinate transforms and the moving-boundary check.

The mid-price moves with the relative change of the two side factors,
``dS = c_s theta (dV^b / V^b - dV^a / V^a)``, so in the two-factor regime it is
an arithmetic Brownian motion with drift ``-c_s theta (nu_b - nu_a)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Optional

import numpy as np
from scipy import integrate, stats

if TYPE_CHECKING:
    from .lob_model import BookDensity, ModelParams
    from .sde_core import TimeGrid


@dataclass(frozen=True, eq=False)
class PricePath:
    grid: "TimeGrid"
    s: np.ndarray
    drift: float
    sigma_s: float


def price_increment(p: "ModelParams", dlogv_b, dlogv_a):
    """``c_s theta (dV^b/V^b - dV^a/V^a)`` from the relative factor increments."""
    return p.c_s * p.theta * (np.asarray(dlogv_b) - np.asarray(dlogv_a))


def accumulate(s0: float, ds: np.ndarray) -> np.ndarray:
    ds = np.asarray(ds, dtype=float)
    start = np.full(ds.shape[:-1] + (1,), float(s0))
    return np.concatenate([start, s0 + np.cumsum(ds, axis=-1)], axis=-1)


def mid_drift(p: "ModelParams") -> float:
    """Two-factor drift ``-c_s theta (nu_b - nu_a)``."""
    return -p.c_s * p.theta * (p.nu_b - p.nu_a)


def mid_vol(p: "ModelParams") -> float:
    """``c_s theta sqrt(sigma_b^2 + sigma_a^2 - 2 rho sigma_a sigma_b)``."""
    var = p.sigma_b ** 2 + p.sigma_a ** 2 - 2.0 * p.rho_ab * p.sigma_a * p.sigma_b
    return p.c_s * p.theta * math.sqrt(max(var, 0.0))


def price_path(p: "ModelParams", trajectory) -> PricePath:
    return PricePath(trajectory.grid, trajectory.s, mid_drift(p), mid_vol(p))


def prob_up_move(p: "ModelParams", d0_b: float, d0_a: float, dbar_b: float, dbar_a: float,
                 y: float, dt: float) -> float:
    """Gaussian approximation of ``P(S_{t+dt} - S_t >= y)`` given current depths.

    Over a short step the mid-price increment is approximately normal with
    mean ``c_s theta [nu_b (dbar_b/d0_b - 1) - nu_a (dbar_a/d0_a - 1)] dt``
    and standard deviation ``sigma_S sqrt(dt)``.
    """
    if d0_b <= 0 or d0_a <= 0:
        raise ValueError("current depths must be positive")
    if dt <= 0:
        raise ValueError("dt must be positive")
    mean = p.c_s * p.theta * (p.nu_b * (dbar_b / d0_b - 1.0) - p.nu_a * (dbar_a / d0_a - 1.0)) * dt
    sd = mid_vol(p) * math.sqrt(dt)
    if sd == 0:
        return 1.0 if mean >= y else 0.0
    return float(stats.norm.sf((y - mean) / sd))


def expected_order_flow(nu: float, dbar: float, d0: float, dt: float) -> float:
    """Expected net order flow ``nu (dbar - d0) dt`` at one side over ``dt``."""
    return nu * (dbar - d0) * dt


def scale_distance(d, p: "ModelParams"):
    """``x = theta (|d| / theta)^a``, signed like ``d``."""
    d = np.asarray(d, dtype=float)
    if p.scaling_exponent_a == 1.0:
        return d.copy()
    return np.sign(d) * p.theta * (np.abs(d) / p.theta) ** p.scaling_exponent_a


def unscale_distance(x, p: "ModelParams"):
    x = np.asarray(x, dtype=float)
    if p.scaling_exponent_a == 1.0:
        return x.copy()
    return np.sign(x) * p.theta * (np.abs(x) / p.theta) ** (1.0 / p.scaling_exponent_a)


@dataclass(frozen=True, eq=False)
class AbsoluteDensity:
    """Book density in absolute price ``p`` around the mid-price ``s``."""

    prices: np.ndarray
    values: np.ndarray
    s: float


def to_absolute(u: "BookDensity", s: float, p: "ModelParams") -> AbsoluteDensity:
    """Shift a centred density to price coordinates; with a nonlinear tick scaling
    the grid is mapped back through ``|d| = theta (|x| / theta)^(1/a)``."""
    return AbsoluteDensity(s + unscale_distance(u.x_grid, p), u.values.copy(), float(s))


def to_relative(v: AbsoluteDensity, p: "ModelParams") -> "BookDensity":
    from .lob_model import BookDensity

    return BookDensity(scale_distance(v.prices - v.s, p), v.values.copy())


def _side_shape(side, y):
    """``H_1``, ``H_1'`` and ``H_1''`` of a side at offsets ``y`` (zero off the side)."""
    from . import spectral

    lo, hi = side.interval
    inside = (y >= lo) & (y <= hi)
    g = side.sign * side.gamma
    k = math.pi / side.L
    e = np.exp(-g * y) / spectral.principal_normalizer(side)
    sn, cs = np.sin(k * y), np.cos(k * y)
    h0 = e * sn
    h1 = e * (k * cs - g * sn)
    h2 = e * ((g * g - k * k) * sn - 2 * g * k * cs)
    return [np.where(inside, h, 0.0) for h in (h0, h1, h2)]


def _one_sided_slope(side, at_mid: bool) -> float:
    """Second-order one-sided difference of ``H_1`` at the mid or far boundary."""
    from . import spectral

    lo, hi = side.interval
    h = side.L * 1e-4
    if (at_mid and side.side == "ask") or (not at_mid and side.side == "bid"):
        x0, step = lo, h
    else:
        x0, step = hi, -h
    pts = np.array([x0, x0 + step, x0 + 2 * step])
    f = spectral.principal_density(side, np.clip(pts, lo, hi))
    return float((-3 * f[0] + 4 * f[1] - f[2]) / (2 * step))


class _Tabulated:
    """Functionals ``int H^(j)(y) phi(y + s) dy`` tabulated over ``s``."""

    def __init__(self, side, phi: Callable, s_lo: float, s_hi: float, n_s: int = 4001,
                 n_y: int = 4097):
        lo, hi = side.interval
        self.y = np.linspace(lo, hi, n_y)
        self.s = np.linspace(s_lo, s_hi, n_s)
        hs = _side_shape(side, self.y)
        vals = [np.empty(n_s) for _ in hs]
        step = 256
        for i in range(0, n_s, step):
            ph = phi(self.y[None, :] + self.s[i:i + step, None])
            for j, h in enumerate(hs):
                vals[j][i:i + step] = integrate.simpson(h * ph, x=self.y, axis=-1)
        self.vals = vals

    def __call__(self, j: int, s):
        return np.interp(s, self.s, self.vals[j])


def weak_form_residual(p: "ModelParams", init, phi: Callable, grid: "TimeGrid", seed: int,
                       n_paths: int, path_offset: int = 0, boundary_sign: float = 1.0,
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Per-path residual of the moving-boundary weak formulation.

    Simulates the two-factor book ``v_t(p) = V^b H^b(p - S) + V^a H^a(p - S)``
    and returns, for each path,

        <v_T, phi> - <v_0, phi> - sum_k [ <m(v), phi> dt + stochastic terms
        + (boundary_sign / 2) sigma_S^2 B(v, phi) dt ]

    where ``B = (v'(S+) - v'(S-)) phi(S) + v'(S-L+) phi(S-L) - v'(S+L-) phi(S+L)``
    collects the kinks of ``v`` at the mid and at the moving edges.  Interior
    integrals use the analytic derivatives of ``H_1``; the boundary slopes use
    one-sided differences.  The residual is ``O(dt)`` in mean and
    ``O(sqrt(dt))`` per path for the correct sign, and biased otherwise.
    Also returns the per-path change ``<v_T, phi> - <v_0, phi>`` for scale.
    """
    from .lob_model import simulate_two_factor

    tr = simulate_two_factor(p, init, grid, seed, n_paths, path_offset)
    s = tr.s
    L = p.L
    pad = 1e-9 + 1e-6 * L
    s_lo, s_hi = float(s.min()) - pad, float(s.max()) + pad
    tab_b = _Tabulated(p.bid, phi, s_lo, s_hi)
    tab_a = _Tabulated(p.ask, phi, s_lo, s_hi)
    sig_s = mid_vol(p)
    cst = p.c_s * p.theta
    dnu = p.nu_b - p.nu_a
    kap_a = p.ask.beta + cst * dnu - cst * (p.rho_ab * p.sigma_b * p.sigma_a - p.sigma_a ** 2)
    kap_b = -p.bid.beta + cst * dnu - cst * (p.sigma_b ** 2 - p.rho_ab * p.sigma_a * p.sigma_b)
    eta_a = p.ask.eta + 0.5 * sig_s ** 2
    eta_b = p.bid.eta + 0.5 * sig_s ** 2

    sk, vb, va = s[:, :-1], tr.v_b[:, :-1], tr.v_a[:, :-1]
    f0a, f1a, f2a = (tab_a(j, sk) for j in range(3))
    f0b, f1b, f2b = (tab_b(j, sk) for j in range(3))
    drift = (va * (eta_a * f2a + kap_a * f1a + p.ask.alpha * f0a)
             + vb * (eta_b * f2b + kap_b * f1b + p.bid.alpha * f0b))
    grad = va * f1a + vb * f1b
    noise = ((p.sigma_a * va * f0a + cst * p.sigma_a * grad) * tr.dw_a
             + (p.sigma_b * vb * f0b - cst * p.sigma_b * grad) * tr.dw_b)

    ga_mid = _one_sided_slope(p.ask, True)
    gb_mid = _one_sided_slope(p.bid, True)
    ga_far = _one_sided_slope(p.ask, False)
    gb_far = _one_sided_slope(p.bid, False)
    kink = ((va * ga_mid - vb * gb_mid) * phi(sk) + vb * gb_far * phi(sk - L)
            - va * ga_far * phi(sk + L))
    dt = grid.dt
    total = np.sum(drift * dt + noise + 0.5 * boundary_sign * sig_s ** 2 * kink * dt, axis=-1)
    pair_end = tr.v_a[:, -1] * tab_a(0, s[:, -1]) + tr.v_b[:, -1] * tab_b(0, s[:, -1])
    pair_start = tr.v_a[:, 0] * tab_a(0, s[:, 0]) + tr.v_b[:, 0] * tab_b(0, s[:, 0])
    change = pair_end - pair_start
    return change - total, change


def weak_form_defect(p: "ModelParams", init, phi: Callable, grid: "TimeGrid", seed: int,
                     n_paths: int, chunk: int = 2000, boundary_sign: float = 1.0,
                     ) -> tuple[float, float, float]:
    """Mean residual, its standard error and the mean ``|<v_T, phi> - <v_0, phi>|``."""
    from .streams import chunks

    res, chg = [], []
    for off, size in chunks(n_paths, chunk):
        r, c = weak_form_residual(p, init, phi, grid, seed, size, off, boundary_sign)
        res.append(r)
        chg.append(c)
    r = np.concatenate(res)
    c = np.concatenate(chg)
    return float(r.mean()), float(r.std(ddof=1) / math.sqrt(r.size)), float(np.abs(c).mean())

