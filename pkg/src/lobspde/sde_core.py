"""Scalar semimartingale drivers, stochastic exponentials and linear SDEs.

Drivers are Brownian motions with optional jump marks sitting on grid points.
A jump recorded at grid index ``k`` is applied after the diffusion increment of
step ``k-1 -> k``, so ``values[..., k]`` already contains it and the left limit
at ``t_k`` is ``values[..., k] - jump_sizes[..., k]``.

All path arrays carry time on the last axis and may have any number of leading
(path) axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from . import streams


class InvalidJumpError(ValueError):
    """A jump mark ``<= -1`` (a cancellation ratio of 100% or more)."""


class NonErgodicError(ValueError):
    """Parameters for which the linear SDE has no invariant law."""


@dataclass(frozen=True)
class TimeGrid:
    t0: float = 0.0
    dt: float = 1.0
    n_steps: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be an integer >= 1, got {self.n_steps}")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @classmethod
    def over(cls, horizon: float, n_steps: int, t0: float = 0.0) -> "TimeGrid":
        return cls(t0=t0, dt=horizon / n_steps, n_steps=n_steps)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    @property
    def elapsed(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * self.n_steps

    def index_of(self, t: float) -> int:
        k = int(round((t - self.t0) / self.dt))
        if k < 0 or k > self.n_steps or not math.isclose(self.t0 + k * self.dt, t,
                                                          rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(f"time {t} is not a point of the grid")
        return k


@dataclass(frozen=True, eq=False)
class DriverPath:
    """Sampled semimartingale ``X`` with its jump marks and ``[X, X]^c``."""

    grid: TimeGrid
    values: np.ndarray
    jump_sizes: np.ndarray
    quadratic_variation_c: np.ndarray

    def __post_init__(self):
        n = self.grid.n_steps + 1
        if self.values.shape[-1] != n:
            raise ValueError("values do not match the grid")
        if self.jump_sizes.shape != self.values.shape:
            raise ValueError("jump_sizes must have the shape of values")
        if np.any(self.jump_sizes[..., 0] != 0):
            raise ValueError("a jump at the initial time is not allowed")
        _check_jumps(self.jump_sizes)

    @property
    def jumps(self) -> list[tuple[float, float]]:
        """``(time, size)`` marks of a single path."""
        if self.values.ndim != 1:
            raise ValueError("jumps listing is defined for a single path")
        idx = np.flatnonzero(self.jump_sizes)
        return [(float(self.grid.times[k]), float(self.jump_sizes[k])) for k in idx]

    @property
    def continuous_increments(self) -> np.ndarray:
        return np.diff(self.values, axis=-1) - self.jump_sizes[..., 1:]

    def scaled(self, factor: float) -> "DriverPath":
        return DriverPath(self.grid, factor * self.values, factor * self.jump_sizes,
                          factor ** 2 * np.broadcast_to(self.quadratic_variation_c,
                                                        self.values.shape).copy())


def _check_jumps(jump_sizes: np.ndarray) -> None:
    if np.any(jump_sizes <= -1.0):
        bad = float(np.min(jump_sizes))
        raise InvalidJumpError(f"jump of size {bad} <= -1 is not admissible")


def brownian_increments(grid: TimeGrid, seed: int, n_paths: int = 1, dim: int = 1, *,
                        stream: int = 0, path_offset: int = 0) -> np.ndarray:
    """Independent Brownian increments of shape ``(n_paths, dim, n_steps)``."""
    z = streams.standard_normals(seed, n_paths, (dim, grid.n_steps), stream=stream,
                                 path_offset=path_offset)
    return z * math.sqrt(grid.dt)


def driver_from_increments(grid: TimeGrid, dw: np.ndarray, sigma: float = 1.0,
                           jump_sizes: Optional[np.ndarray] = None) -> DriverPath:
    """``X = sigma * W + sum of jumps`` from Brownian increments ``dw`` (..., n_steps)."""
    dw = np.asarray(dw, dtype=float)
    lead = dw.shape[:-1]
    if dw.shape[-1] != grid.n_steps:
        raise ValueError("increments do not match the grid")
    if jump_sizes is None:
        jump_sizes = np.zeros(lead + (grid.n_steps + 1,))
    else:
        jump_sizes = np.asarray(jump_sizes, dtype=float)
        _check_jumps(jump_sizes)
    steps = sigma * dw + jump_sizes[..., 1:]
    values = np.concatenate([np.zeros(lead + (1,)), np.cumsum(steps, axis=-1)], axis=-1)
    qv = np.broadcast_to(sigma ** 2 * grid.elapsed, values.shape).copy()
    return DriverPath(grid, values, jump_sizes, qv)


def brownian_driver(grid: TimeGrid, sigma: float = 1.0, *, seed: int = 0, n_paths: Optional[int] = None,
                    path_offset: int = 0, stream: int = 0,
                    jumps: Optional[list[tuple[float, float]]] = None) -> DriverPath:
    """Brownian driver ``sigma * W`` with optional deterministic jump marks.

    With ``n_paths=None`` a single path with 1-d arrays is returned.
    """
    m = 1 if n_paths is None else n_paths
    dw = brownian_increments(grid, seed, m, 1, stream=stream, path_offset=path_offset)[:, 0, :]
    js = np.zeros((m, grid.n_steps + 1))
    for t, size in jumps or ():
        k = grid.index_of(t)
        if k == 0:
            raise ValueError("jumps must occur after the initial time")
        js[:, k] += size
    x = driver_from_increments(grid, dw, sigma, js)
    if n_paths is None:
        return DriverPath(grid, x.values[0], x.jump_sizes[0], x.quadratic_variation_c[0])
    return x


def compound_poisson_marks(grid: TimeGrid, intensity: float, low: float, high: float,
                           rng: np.random.Generator, n_paths: int = 1) -> np.ndarray:
    """Jump marks of a compound Poisson process with uniform(low, high) sizes.

    Jumps are binned to the right end of their step.  Returns an array of shape
    ``(n_paths, n_steps + 1)`` with zeros where no jump occurs.
    """
    if low <= -1.0:
        raise InvalidJumpError("uniform mark distribution must stay above -1")
    counts = rng.poisson(intensity * grid.dt, size=(n_paths, grid.n_steps))
    marks = np.zeros((n_paths, grid.n_steps + 1))
    hit = counts > 0
    # several jumps in one step compose multiplicatively into one mark
    total = np.ones(counts.shape)
    for j in range(int(counts.max(initial=0))):
        draw = rng.uniform(low, high, size=counts.shape)
        total = np.where(counts > j, total * (1.0 + draw), total)
    marks[:, 1:] = np.where(hit, total - 1.0, 0.0)
    return marks


def log_stochastic_exponential(x: DriverPath) -> np.ndarray:
    _check_jumps(x.jump_sizes)
    qv = np.broadcast_to(x.quadratic_variation_c, x.values.shape)
    js = x.jump_sizes
    return ((x.values - x.values[..., :1]) - 0.5 * (qv - qv[..., :1])
            - np.cumsum(js, axis=-1) + np.cumsum(np.log1p(js), axis=-1))


def stochastic_exponential(x: DriverPath) -> np.ndarray:
    """Doleans-Dade exponential ``E_t(X)`` sampled on the driver's grid."""
    return np.exp(log_stochastic_exponential(x))


def reciprocal_driver(x: DriverPath) -> DriverPath:
    """The driver ``Y`` with ``E(X) E(Y) = 1``.

    ``Y = -X + [X,X]^c + sum dX^2 / (1 + dX)``; its jumps are ``-dX / (1 + dX)``
    and its continuous quadratic variation equals that of ``X``.
    """
    _check_jumps(x.jump_sizes)
    js = x.jump_sizes
    qv = np.broadcast_to(x.quadratic_variation_c, x.values.shape)
    values = -x.values + qv + np.cumsum(js ** 2 / (1.0 + js), axis=-1)
    return DriverPath(x.grid, values, -js / (1.0 + js), qv.copy())


@dataclass(frozen=True)
class LinearSDEParams:
    """``dZ = (a Z + c) dt + (b Z + d) dW`` with ``d = 0``."""

    a: float
    b: float
    c: float
    d: float = 0.0

    def __post_init__(self):
        if self.d != 0:
            raise ValueError("only the multiplicative-noise case d = 0 is supported")


@dataclass(frozen=True)
class InverseGammaLaw:
    """Inverse Gamma law; ``1/Z`` is Gamma(shape) with Gamma scale ``scale``."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError("shape and scale must be positive")

    @property
    def mean(self) -> float:
        if self.shape <= 1:
            return math.inf
        return 1.0 / (self.scale * (self.shape - 1.0))

    @property
    def variance(self) -> float:
        if self.shape <= 2:
            return math.inf
        return 1.0 / (self.scale ** 2 * (self.shape - 1.0) ** 2 * (self.shape - 2.0))

    def moment(self, k: float) -> float:
        if k >= self.shape:
            return math.inf
        return math.exp(-k * math.log(self.scale) + math.lgamma(self.shape - k)
                        - math.lgamma(self.shape))

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        return 1.0 / rng.gamma(self.shape, self.scale, size=size)

    def frozen(self):
        return stats.invgamma(a=self.shape, scale=1.0 / self.scale)


def _pre_jump_log(log_values: np.ndarray, jump_sizes: np.ndarray) -> np.ndarray:
    return log_values - np.log1p(jump_sizes)


def _block_length(p: LinearSDEParams, dt: float, limit: int = 512) -> int:
    # keep exp() of in-block log-ratios far from overflow
    drift = abs(p.a) + 0.5 * p.b ** 2
    for m in (limit, 256, 128, 64, 32, 16, 8, 4, 2, 1):
        if drift * m * dt + 8.0 * abs(p.b) * math.sqrt(m * dt) < 200.0:
            return m
    return 1


def solve_linear_sde(p: LinearSDEParams, w: DriverPath, z0) -> np.ndarray:
    """Explicit solution of ``dZ = (aZ + c) dt + b Z dW`` on the grid of ``w``.

    ``Z_t = E_t(X) e^{at} (z0 + c * int_0^t e^{-as} E_{s-}(Y) ds)`` with ``X = bW``
    and ``E(Y) = 1/E(X)``; the time integral uses the trapezoidal rule per step
    and is accumulated block-wise in log space so that long horizons neither
    overflow nor underflow.
    """
    z0 = np.asarray(z0, dtype=float)
    if np.any(z0 <= 0):
        raise ValueError("initial value must be positive")
    x = w.scaled(p.b)
    dt = w.grid.dt
    log_g = log_stochastic_exponential(x) + p.a * w.grid.elapsed
    log_g_pre = _pre_jump_log(log_g, x.jump_sizes)
    n = w.grid.n_steps
    z = np.empty(log_g.shape)
    z[..., 0] = z0
    if p.c == 0.0:
        return np.broadcast_to(z0[..., None] if z0.ndim else z0, log_g.shape) * np.exp(log_g)
    m = _block_length(p, dt)
    for j0 in range(0, n, m):
        j1 = min(n, j0 + m)
        ref = log_g[..., j0:j0 + 1]
        left = np.exp(ref - log_g[..., j0:j1])
        right = np.exp(ref - log_g_pre[..., j0 + 1:j1 + 1])
        integral = np.cumsum(0.5 * dt * (left + right), axis=-1)
        z[..., j0 + 1:j1 + 1] = np.exp(log_g[..., j0 + 1:j1 + 1] - ref) * (
            z[..., j0:j0 + 1] + p.c * integral)
    return z


def milstein_linear_sde(p: LinearSDEParams, w: DriverPath, z0) -> np.ndarray:
    """Milstein scheme for ``dZ = (aZ + c) dt + b Z dW`` (strong order 1).

    Cross-check for :func:`solve_linear_sde`; requires a continuous driver.
    """
    if np.any(w.jump_sizes != 0):
        raise ValueError("the Milstein scheme is implemented for continuous drivers only")
    z0 = np.asarray(z0, dtype=float)
    if np.any(z0 <= 0):
        raise ValueError("initial value must be positive")
    dw = np.diff(w.values, axis=-1)
    dq = np.diff(np.broadcast_to(w.quadratic_variation_c, w.values.shape), axis=-1)
    dt = w.grid.dt
    z = np.empty(w.values.shape)
    z[..., 0] = z0
    for k in range(w.grid.n_steps):
        zk = z[..., k]
        z[..., k + 1] = (zk + (p.a * zk + p.c) * dt + p.b * zk * dw[..., k]
                         + 0.5 * p.b ** 2 * zk * (dw[..., k] ** 2 - dq[..., k]))
    return z


def stationary_law(p: LinearSDEParams) -> InverseGammaLaw:
    if p.a >= 0 or p.c <= 0:
        raise NonErgodicError(f"no invariant law for a={p.a}, c={p.c} (need a < 0, c > 0)")
    if p.b == 0:
        raise NonErgodicError("b = 0: the invariant law is a point mass")
    return InverseGammaLaw(shape=1.0 - 2.0 * p.a / p.b ** 2, scale=p.b ** 2 / (2.0 * p.c))


def mean_at(p: LinearSDEParams, z0: float, t):
    """``E[Z_t]``, solving ``mu' = a mu + c`` (the ``a = 0`` limit is ``z0 + c t``)."""
    t = np.asarray(t, dtype=float)
    if p.a == 0:
        out = z0 + p.c * t
    else:
        out = (z0 + p.c / p.a) * np.exp(p.a * t) - p.c / p.a
    return out if out.ndim else float(out)


def stationary_autocorrelation(p: LinearSDEParams, lag):
    if p.a >= 0 or p.c <= 0:
        raise NonErgodicError("autocorrelation is defined for the stationary regime a < 0, c > 0")
    lag = np.asarray(lag, dtype=float)
    out = np.exp(p.a * np.abs(lag))
    return out if out.ndim else float(out)


def reciprocal_process(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ValueError("reciprocal process needs a strictly positive path")
    return 1.0 / z


def logistic_drift(p: LinearSDEParams, y):
    """Drift of ``Y = 1/Z``: ``-Y (a - b^2 + c Y)``."""
    y = np.asarray(y, dtype=float)
    return -y * (p.a - p.b ** 2 + p.c * y)
