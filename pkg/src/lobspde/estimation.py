"""Estimators for book-shape and depth-dynamics parameters.

Depth dynamics are read as reciprocal-Gamma diffusions

    dD = nu (Dbar - D) dt + sqrt(2 nu / c) D dW,

whose invariant law is Inverse Gamma with shape ``1 + c``.  Moments give
``Dbar`` and ``c``, a martingale estimating function gives ``nu``, and the
diffusion coefficient follows as ``sigma^2 = 2 nu / c``.  Book shapes are fitted
to ``U(x) = V exp(-gamma y) sin(pi y / L)`` with ``y = x^a`` in tick units.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional

import numpy as np

from .sde_core import TimeGrid

MAX_ITER = 100
STEP_TOL = 1e-10
FOURTH_MOMENT_C = 5.0


class EstimationError(ValueError):
    pass


class NonMeanRevertingError(EstimationError):
    """The sample shows no mean reversion; ``nu`` cannot be estimated."""


@dataclass(frozen=True, eq=False)
class DepthSeries:
    grid: TimeGrid
    d_b: np.ndarray
    d_a: np.ndarray
    s: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.grid.n_steps + 1
        for name in ("d_b", "d_a", "s"):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.asarray(v, dtype=float)
            if v.shape != (n,):
                raise ValueError(f"{name} has shape {v.shape}, expected ({n},)")
            object.__setattr__(self, name, v)
        if np.any(self.d_b <= 0) or np.any(self.d_a <= 0):
            raise ValueError("depths must be strictly positive")

    def __len__(self) -> int:
        return self.d_b.size

    @property
    def has_price(self) -> bool:
        return self.s is not None

    def side(self, name: str) -> np.ndarray:
        if name == "bid":
            return self.d_b
        if name == "ask":
            return self.d_a
        raise ValueError(f"side must be 'bid' or 'ask', got {name!r}")

    def mirrored(self) -> "DepthSeries":
        s = None if self.s is None else -self.s
        return DepthSeries(self.grid, self.d_a, self.d_b, s)

    def slice(self, i0: int, i1: int) -> "DepthSeries":
        """Samples ``i0 .. i1 - 1`` as a new series."""
        if i1 - i0 < 2:
            raise EstimationError("a window needs at least 2 samples")
        g = TimeGrid(self.grid.t0 + i0 * self.grid.dt, self.grid.dt, i1 - i0 - 1)
        s = None if self.s is None else self.s[i0:i1]
        return DepthSeries(g, self.d_b[i0:i1], self.d_a[i0:i1], s)

    def windows(self, seconds: float) -> Iterator[tuple[int, "DepthSeries"]]:
        """Consecutive windows of ``seconds``; a short tail window is kept if it has 2 samples."""
        per = max(1, int(round(seconds / self.grid.dt)))
        for w, i0 in enumerate(range(0, len(self), per)):
            i1 = min(len(self), i0 + per)
            if i1 - i0 >= 2:
                yield w, self.slice(i0, i1)


@dataclass(frozen=True)
class ProfileFit:
    gamma: float
    volume_scale: float
    scaling_exponent_a: float = 1.0
    residual: float = 0.0
    converged: bool = True
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if not self.volume_scale > 0:
            raise ValueError("volume scale must be positive")
        if not self.scaling_exponent_a > 0:
            raise ValueError("scaling exponent must be positive")


@dataclass(frozen=True)
class ParamEstimates:
    dbar_b: float
    dbar_a: float
    c_b: float
    c_a: float
    nu_b: float
    nu_a: float
    sigma_b: float
    sigma_a: float
    rho_ab: float
    sigma_rv_b: float = math.nan
    sigma_rv_a: float = math.nan
    diagnostics: dict = field(default_factory=dict)

    COLUMNS = ("dbar_b", "dbar_a", "c_b", "c_a", "nu_b", "nu_a", "sigma_b", "sigma_a",
               "rho_ab", "sigma_rv_b", "sigma_rv_a")

    def row(self) -> list[float]:
        return [getattr(self, k) for k in self.COLUMNS]


class MomentEstimate(NamedTuple):
    dbar: float
    c: float

    @property
    def fourth_moment(self) -> bool:
        """``c > 5``: finite fourth moment, so the estimators are asymptotically normal."""
        return self.c > FOURTH_MOMENT_C


# --- profile fitting -------------------------------------------------------

def _profile_arrays(ticks, sizes) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(ticks, dtype=float)
    u = np.asarray(sizes, dtype=float)
    if x.shape != u.shape or x.ndim != 1:
        raise ValueError("ticks and sizes must be matching 1-d arrays")
    if np.unique(x).size < 3:
        raise EstimationError("need at least 3 distinct levels")
    if np.any(x <= 0):
        raise ValueError("tick distances must be positive")
    if np.any(u < 0):
        raise ValueError("sizes must be non-negative")
    if not np.any(u > 0):
        raise EstimationError("all-zero profile")
    return x, u


def profile_shape(x, gamma: float, a: float, L: float) -> np.ndarray:
    y = np.asarray(x, dtype=float) ** a
    return np.exp(-gamma * y) * np.sin(math.pi * y / L)


def _best_scale(f: np.ndarray, u: np.ndarray) -> float:
    ff = float(f @ f)
    return float(f @ u) / ff if ff > 0 else 0.0


def _sse(x, u, V, g, a, L) -> float:
    r = V * profile_shape(x, g, a, L) - u
    return float(r @ r)


def _jacobian(x, V, g, a, L, nonlinear: bool) -> np.ndarray:
    y = x ** a
    e = np.exp(-g * y)
    sn, cs = np.sin(math.pi * y / L), np.cos(math.pi * y / L)
    f = e * sn
    cols = [f, -V * y * f]
    if nonlinear:
        dfdy = e * (-g * sn + math.pi / L * cs)
        cols.append(V * dfdy * y * np.log(x))
    return np.stack(cols, axis=1)


def fit_profile_ls(ticks, sizes, L: float = 1000.0, nonlinear: bool = False,
                   scaling_exponent_a: float = 1.0) -> ProfileFit:
    """Least-squares fit of ``V exp(-gamma y) sin(pi y / L)``, ``y = x^a``.

    Grid-seeded Gauss-Newton with step halving on ``(V, gamma)``, plus ``a``
    when ``nonlinear``.  A flat profile has no decay to resolve and returns
    ``gamma = 0`` flagged as degenerate.
    """
    x, u = _profile_arrays(ticks, sizes)
    if np.ptp(u) == 0:
        V = _best_scale(profile_shape(x, 0.0, scaling_exponent_a, L), u)
        return ProfileFit(0.0, V, scaling_exponent_a, _sse(x, u, V, 0.0, scaling_exponent_a, L),
                          True, ("flat-profile",))

    # seed on a grid in (gamma, a) with the scale solved linearly
    a_grid = np.linspace(0.3, 1.5, 25) if nonlinear else np.array([scaling_exponent_a])
    g_grid = np.concatenate([[0.0], np.geomspace(1e-3, 10.0, 81)])
    best = (math.inf, 0.0, 0.0, scaling_exponent_a)
    for a in a_grid:
        for g in g_grid:
            f = profile_shape(x, g, a, L)
            V = _best_scale(f, u)
            if V <= 0:
                continue
            r = V * f - u
            sse = float(r @ r)
            if sse < best[0]:
                best = (sse, V, g, a)
    sse, V, g, a = best
    theta = np.array([V, g, a] if nonlinear else [V, g])
    converged = False
    for _ in range(MAX_ITER):
        J = _jacobian(x, theta[0], theta[1], theta[2] if nonlinear else a, L, nonlinear)
        r = u - theta[0] * profile_shape(x, theta[1], theta[2] if nonlinear else a, L)
        step, *_ = np.linalg.lstsq(J, r, rcond=None)
        lam = 1.0
        while lam > 1e-12:
            cand = theta + lam * step
            cand[1] = max(cand[1], 0.0)
            if nonlinear:
                cand[2] = max(cand[2], 1e-3)
            c_sse = _sse(x, u, cand[0], cand[1], cand[2] if nonlinear else a, L)
            if c_sse <= sse:
                break
            lam *= 0.5
        else:
            converged = True  # no descent direction left
            break
        rel = np.max(np.abs(cand - theta) / np.maximum(np.abs(theta), 1e-12))
        theta, sse = cand, c_sse
        if rel < STEP_TOL:
            converged = True
            break
    a_fit = float(theta[2]) if nonlinear else a
    flags = () if converged else ("max-iterations",)
    return ProfileFit(float(theta[1]), float(theta[0]), a_fit, math.sqrt(sse), converged, flags)


def gamma_from_peak(x_hat: float, L: float) -> float:
    """Invert the peak position: ``gamma = (pi / L) / tan(pi x_hat / L)`` (0 past ``L/2``)."""
    if not 0 < x_hat < L:
        raise ValueError("peak must lie strictly inside (0, L)")
    return max(0.0, (math.pi / L) / math.tan(math.pi * x_hat / L))


def _parabola_vertex(x3: np.ndarray, y3: np.ndarray) -> float:
    (x0, x1, x2), (y0, y1, y2) = x3, y3
    den = (x0 - x1) * (x0 - x2) * (x1 - x2)
    A = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / den
    B = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / den
    if A >= 0:
        return float(x1)
    return float(np.clip(-B / (2 * A), x0, x2))


def fit_profile_peak(ticks, sizes, L: float = 1000.0,
                     scaling_exponent_a: float = 1.0) -> ProfileFit:
    """Shape from the position and height of the profile maximum.

    The maximum is refined by a parabola through the log-sizes around the
    largest observation.  A maximum at the first level only bounds the peak
    position from above, so the returned ``gamma`` is a flagged lower bound.
    """
    x, u = _profile_arrays(ticks, sizes)
    order = np.argsort(x)
    x, u = x[order] ** scaling_exponent_a, u[order]
    i = int(np.argmax(u))
    flags: tuple[str, ...] = ()
    if i == 0:
        x_hat = 0.5 * (x[0] + x[1])
        flags = ("peak-at-first-level", "lower-bound")
    elif i == x.size - 1:
        x_hat = float(x[i])
        flags = ("peak-at-last-level",)
    elif np.all(u[i - 1:i + 2] > 0):
        x_hat = _parabola_vertex(x[i - 1:i + 2], np.log(u[i - 1:i + 2]))
    else:
        x_hat = float(x[i])
    g = gamma_from_peak(x_hat, L)
    peak = u[i] if i == 0 else float(np.exp(np.interp(x_hat, x, np.log(np.maximum(u, 1e-300)))))
    if i > 0 and np.all(u[i - 1:i + 2] > 0):
        # height of the fitted log-parabola
        c = np.polyfit(x[i - 1:i + 2], np.log(u[i - 1:i + 2]), 2)
        peak = float(np.exp(np.polyval(c, x_hat)))
    V = peak / float(profile_shape(x_hat, g, 1.0, L))
    return ProfileFit(g, V, scaling_exponent_a, math.nan, True, flags)


# --- depth dynamics --------------------------------------------------------

def _values(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 2:
        raise EstimationError("need a 1-d series with at least 2 samples")
    return v


def estimate_mom(series, side: Optional[str] = None) -> MomentEstimate:
    """``Dbar`` = sample mean, ``c = 1 + Dbar^2 / (m2 - Dbar^2)``."""
    v = _values(series.side(side) if isinstance(series, DepthSeries) else series)
    dbar = float(v.mean())
    var = float(np.mean(v * v)) - dbar * dbar
    if var <= 1e-14 * dbar * dbar:
        raise EstimationError("constant series: c is undefined")
    return MomentEstimate(dbar, 1.0 + dbar * dbar / var)


def estimate_nu_mef(series, dbar: float, dt: float, side: Optional[str] = None) -> float:
    """Root of the martingale estimating function for the mean-reversion rate.

    With weights ``w = (Dbar - D_{n-1}) / D_{n-1}^2`` the root is
    ``exp(-nu dt) = sum w (D_n - Dbar) / sum w (D_{n-1} - Dbar)``.
    """
    v = _values(series.side(side) if isinstance(series, DepthSeries) else series)
    if dt <= 0:
        raise ValueError("dt must be positive")
    prev, nxt = v[:-1], v[1:]
    w = (dbar - prev) / prev ** 2
    num = float(np.sum(w * (dbar - prev)))
    den = float(np.sum(w * (nxt - dbar)))
    if den == 0 or not num > 0:
        raise NonMeanRevertingError("estimating function has no root")
    ratio = -num / den
    if not 0 < 1.0 / ratio < 1:
        raise NonMeanRevertingError(
            f"implied one-step autocorrelation {1.0 / ratio:.4g} is outside (0, 1)")
    return math.log(ratio) / dt


def estimate_sigma_rho(series: DepthSeries) -> tuple[float, float, float]:
    """Realized volatilities of log-depth and their realized correlation."""
    if len(series) < 2:
        raise EstimationError("need at least 2 samples")
    xb = np.diff(np.log(series.d_b))
    xa = np.diff(np.log(series.d_a))
    T = xb.size * series.grid.dt
    qb, qa = float(xb @ xb), float(xa @ xa)
    sb, sa = math.sqrt(qb / T), math.sqrt(qa / T)
    rho = float(xb @ xa) / math.sqrt(qb * qa) if qb > 0 and qa > 0 else math.nan
    return sb, sa, rho


def sigma_rcg(nu: float, c: float) -> float:
    """Diffusion coefficient implied by ``sigma^2 = 2 nu / c``."""
    if not (nu > 0 and c > 0):
        raise EstimationError("need nu > 0 and c > 0")
    return math.sqrt(2.0 * nu / c)


def estimate_params(series: DepthSeries, **diag) -> ParamEstimates:
    """All depth-dynamics parameters of one series (bid and ask)."""
    out, flags = {}, {}
    for side, tag in (("bid", "b"), ("ask", "a")):
        m = estimate_mom(series, side)
        nu = estimate_nu_mef(series, m.dbar, series.grid.dt, side)
        out[f"dbar_{tag}"], out[f"c_{tag}"], out[f"nu_{tag}"] = m.dbar, m.c, nu
        out[f"sigma_{tag}"] = sigma_rcg(nu, m.c)
        flags[f"fourth_moment_{tag}"] = m.fourth_moment
    sb, sa, rho = estimate_sigma_rho(series)
    flags.update(n=len(series), t0=series.grid.t0, dt=series.grid.dt, **diag)
    return ParamEstimates(rho_ab=rho, sigma_rv_b=sb, sigma_rv_a=sa, diagnostics=flags, **out)


def estimate_windows(series: DepthSeries, seconds: float) -> list[ParamEstimates]:
    """Per-window estimates; windows where estimation fails are reported in diagnostics."""
    rows = []
    for w, sub in series.windows(seconds):
        try:
            rows.append(estimate_params(sub, window=w))
        except EstimationError as exc:
            nan = [math.nan] * 9
            rows.append(ParamEstimates(*nan, diagnostics={"window": w, "error": str(exc),
                                                          "t0": sub.grid.t0, "n": len(sub)}))
    return rows


@dataclass(frozen=True)
class VolTriple:
    window: int
    t0: float
    n: int
    sigma_rv: float
    sigma_rcg: float
    sigma_realized: float


def _combine(c_s: float, theta: float, sb: float, sa: float, rho: float) -> float:
    return c_s * theta * math.sqrt(max(sb * sb + sa * sa - 2.0 * rho * sa * sb, 0.0))


def vol_compare(series: DepthSeries, c_s: float = 0.5, theta: float = 0.01,
                window: float = 1800.0) -> list[VolTriple]:
    """Per-window price volatility from depths (RV and RCG routes) and from prices.

    The depth routes plug estimated order-flow volatilities into
    ``c_s theta sqrt(sigma_b^2 + sigma_a^2 - 2 rho sigma_a sigma_b)`` and need
    no price data; the realized route is ``sqrt(sum dS^2 / T)`` and is NaN when
    the series carries no prices.
    """
    if len(series) < 2 or series.grid.dt * (len(series) - 1) <= 0:
        raise EstimationError("need at least 2 samples")
    out = []
    for w, sub in series.windows(window):
        sb, sa, rho = estimate_sigma_rho(sub)
        sig_rv = _combine(c_s, theta, sb, sa, rho) if math.isfinite(rho) else 0.0
        try:
            rcg = []
            for side in ("bid", "ask"):
                m = estimate_mom(sub, side)
                rcg.append(sigma_rcg(estimate_nu_mef(sub, m.dbar, sub.grid.dt, side), m.c))
            sig_rcg = _combine(c_s, theta, rcg[0], rcg[1], rho)
        except EstimationError:
            sig_rcg = math.nan
        if sub.has_price:
            ds = np.diff(sub.s)
            sig_real = math.sqrt(float(ds @ ds) / (ds.size * sub.grid.dt))
        else:
            sig_real = math.nan
        out.append(VolTriple(w, sub.grid.t0, len(sub), sig_rv, sig_rcg, sig_real))
    if not out:
        raise EstimationError("no window has at least 2 samples")
    return out
