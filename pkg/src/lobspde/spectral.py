"""Spectral calculus of the per-side drift operator.

On the ask side ``A = eta d2 + beta d1 + alpha`` acts on ``(0, L)``; on the bid
side the convection term flips sign and the interval is ``(-L, 0)``.  With
Dirichlet conditions the eigenpairs are

    nu_k = -alpha + eta k^2 pi^2 / L^2 + beta^2 / (4 eta)
    h_k(x) = exp(-s gamma x) sin(k pi x / L),   gamma = beta / (2 eta),

where ``s = +1`` on the ask side and ``s = -1`` on the bid side, and the
``h_k`` are orthonormal for ``<f, g> = (2/L) int f g exp(2 s gamma x) dx``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal, Optional

import numpy as np
from scipy import integrate, linalg, special

Side = Literal["bid", "ask"]

DEFAULT_POINTS = 4096


@dataclass(frozen=True)
class SideParams:
    eta: float
    beta: float
    alpha: float
    L: float
    side: Side = "ask"

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if self.side not in ("bid", "ask"):
            raise ValueError(f"side must be 'bid' or 'ask', got {self.side!r}")

    @classmethod
    def with_rate(cls, nu: float, *, eta: float = 1.0, beta: float = 0.0, L: float = math.pi,
                  side: Side = "ask") -> "SideParams":
        """Parameters whose principal eigenvalue equals ``nu``."""
        alpha = eta * math.pi ** 2 / L ** 2 + beta ** 2 / (4 * eta) - nu
        return cls(eta=eta, beta=beta, alpha=alpha, L=L, side=side)

    @property
    def sign(self) -> int:
        return 1 if self.side == "ask" else -1

    @property
    def gamma(self) -> float:
        return self.beta / (2.0 * self.eta)

    @property
    def interval(self) -> tuple[float, float]:
        return (0.0, self.L) if self.side == "ask" else (-self.L, 0.0)

    @property
    def nu1(self) -> float:
        return eigenvalue(self, 1)

    def mirrored(self) -> "SideParams":
        return replace(self, side="bid" if self.side == "ask" else "ask")


def eigenvalue(p: SideParams, k):
    k = np.asarray(k)
    if np.any(k < 1):
        raise ValueError("mode index must be >= 1")
    nu = -p.alpha + p.eta * k ** 2 * math.pi ** 2 / p.L ** 2 + p.beta ** 2 / (4 * p.eta)
    return nu if np.ndim(nu) else float(nu)


def eigenfunction(p: SideParams, k: int, x) -> np.ndarray:
    if k < 1:
        raise ValueError("mode index must be >= 1")
    x = np.asarray(x, dtype=float)
    lo, hi = p.interval
    if np.any(x < lo - 1e-12 * p.L) or np.any(x > hi + 1e-12 * p.L):
        raise ValueError(f"points outside the {p.side} interval [{lo}, {hi}]")
    return np.exp(-p.sign * p.gamma * x) * np.sin(k * math.pi * x / p.L)


def weight(p: SideParams, x) -> np.ndarray:
    return np.exp(2.0 * p.sign * p.gamma * np.asarray(x, dtype=float))


def side_grid(p: SideParams, n_intervals: int = DEFAULT_POINTS) -> np.ndarray:
    lo, hi = p.interval
    return np.linspace(lo, hi, n_intervals + 1)


def _check_uniform(x: np.ndarray) -> None:
    if x.ndim != 1 or x.size < 3:
        raise ValueError("need a one-dimensional grid with at least 3 points")
    d = np.diff(x)
    if not np.allclose(d, d[0], rtol=1e-9, atol=0):
        raise ValueError("grid is not uniform")


def weighted_inner_product(f, g, p: SideParams, x) -> np.ndarray:
    """``(2/L) int f g exp(2 s gamma x) dx`` by composite Simpson on ``x``."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    x = np.asarray(x, dtype=float)
    _check_uniform(x)
    if f.shape[-1] != x.size or g.shape[-1] != x.size:
        raise ValueError("sampled functions do not match the grid")
    out = (2.0 / p.L) * integrate.simpson(f * g * weight(p, x), x=x, axis=-1)
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True, eq=False)
class SpectralExpansion:
    """Coefficients ``c_k`` (k = 1..K) of a side profile in the basis ``h_k``.

    ``norm`` is the weighted norm of the expanded profile and ``elapsed`` the
    time it has been evolved; together they give the truncation tail bound.
    """

    side: SideParams
    coeffs: np.ndarray
    norm: float = math.nan
    elapsed: float = 0.0

    @property
    def K(self) -> int:
        return self.coeffs.shape[-1]

    @property
    def rates(self) -> np.ndarray:
        return eigenvalue(self.side, np.arange(1, self.K + 1))

    def reconstruct(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        basis = np.stack([eigenfunction(self.side, k, x) for k in range(1, self.K + 1)])
        return self.coeffs @ basis

    def tail_bound(self) -> float:
        """Sup-norm bound on the discarded modes ``k > K`` at ``elapsed``.

        Cauchy-Schwarz and Parseval give ``norm * sqrt(sum_{k>K} exp(-2 nu_k t))``
        with ``|h_k| <= 1`` on the side; the sum is bounded by the integral
        criterion.
        """
        t = self.elapsed
        if t <= 0 or not math.isfinite(self.norm):
            return math.inf
        p = self.side
        nu0 = -p.alpha + p.beta ** 2 / (4 * p.eta)
        rate = 2.0 * t * p.eta * math.pi ** 2 / p.L ** 2
        tail = 0.5 * math.sqrt(math.pi / rate) * special.erfc(math.sqrt(rate) * self.K)
        return self.norm * math.exp(-nu0 * t) * math.sqrt(tail)


def expand(h0, p: SideParams, K: int, x) -> SpectralExpansion:
    if K < 1:
        raise ValueError("truncation order must be >= 1")
    x = np.asarray(x, dtype=float)
    h0 = np.asarray(h0, dtype=float)
    basis = np.stack([eigenfunction(p, k, x) for k in range(1, K + 1)])
    coeffs = weighted_inner_product(h0[..., None, :], basis, p, x)
    norm = weighted_inner_product(h0, h0, p, x)
    return SpectralExpansion(p, np.asarray(coeffs), float(np.sqrt(np.max(norm))))


def evolve(e: SpectralExpansion, t: float) -> SpectralExpansion:
    """Deterministic semigroup: ``c_k -> exp(-nu_k t) c_k``."""
    if t < 0:
        raise ValueError("evolution time must be non-negative")
    return SpectralExpansion(e.side, e.coeffs * np.exp(-e.rates * t), e.norm, e.elapsed + t)


@dataclass(frozen=True, eq=False)
class PrincipalProfile:
    x: np.ndarray
    values: np.ndarray
    x_hat: float
    peak_value: float
    c1: float


def principal_normalizer(p: SideParams) -> float:
    """``1/c1 = int |h_1|``, in closed form."""
    g = p.gamma
    k = math.pi / p.L
    return k * (math.exp(-g * p.L) + 1.0) / (g ** 2 + k ** 2)


def peak_position(p: SideParams) -> float:
    """Distance from the mid-price of the maximum of ``|H_1|``."""
    return p.L / math.pi * math.atan2(2 * p.eta * math.pi, p.L * p.beta)


def peak_height(p: SideParams) -> float:
    g = p.gamma
    return (math.sqrt(g ** 2 + math.pi ** 2 / p.L ** 2)
            * math.exp(-g * peak_position(p)) / (math.exp(-g * p.L) + 1.0))


def principal_density(p: SideParams, x) -> np.ndarray:
    """L1-normalised principal eigenfunction ``H_1`` (non-positive on the bid side)."""
    return eigenfunction(p, 1, x) / principal_normalizer(p)


def principal_profile(p: SideParams, n_intervals: int = DEFAULT_POINTS) -> PrincipalProfile:
    x = side_grid(p, n_intervals)
    return PrincipalProfile(x=x, values=principal_density(p, x), x_hat=p.sign * peak_position(p),
                            peak_value=peak_height(p), c1=1.0 / principal_normalizer(p))


def apply_operator_fd(p: SideParams, x, g) -> tuple[np.ndarray, np.ndarray]:
    """Fourth-order central differences of ``A g`` at interior points ``x[2:-2]``."""
    x = np.asarray(x, dtype=float)
    _check_uniform(x)
    g = np.asarray(g, dtype=float)
    h = x[1] - x[0]
    gm2, gm1, g0, gp1, gp2 = g[:-4], g[1:-3], g[2:-2], g[3:-1], g[4:]
    d1 = (gm2 - 8 * gm1 + 8 * gp1 - gp2) / (12 * h)
    d2 = (-gm2 + 16 * gm1 - 30 * g0 + 16 * gp1 - gp2) / (12 * h * h)
    return x[2:-2], p.eta * d2 + p.sign * p.beta * d1 + p.alpha * g0


def crank_nicolson(p: SideParams, g0, x, t: float, n_steps: int,
                   source: Optional[np.ndarray] = None) -> np.ndarray:
    """Crank-Nicolson solve of ``dg/dt = A g (+ source)`` with zero Dirichlet data.

    Second-order central differences in space on the uniform grid ``x``.
    """
    x = np.asarray(x, dtype=float)
    _check_uniform(x)
    g = np.array(g0, dtype=float)
    h = x[1] - x[0]
    n = x.size - 2
    if n < 1 or n_steps < 1:
        raise ValueError("need interior points and at least one step")
    dt = t / n_steps
    lower = p.eta / h ** 2 - p.sign * p.beta / (2 * h)
    diag = -2 * p.eta / h ** 2 + p.alpha
    upper = p.eta / h ** 2 + p.sign * p.beta / (2 * h)
    ab = np.zeros((3, n))
    ab[0, 1:] = -0.5 * dt * upper
    ab[1, :] = 1 - 0.5 * dt * diag
    ab[2, :-1] = -0.5 * dt * lower
    f = np.zeros(n) if source is None else np.asarray(source, dtype=float)[1:-1]
    u = g[1:-1].copy()
    for _ in range(n_steps):
        rhs = (1 + 0.5 * dt * diag) * u + dt * f
        rhs[1:] += 0.5 * dt * lower * u[:-1]
        rhs[:-1] += 0.5 * dt * upper * u[1:]
        u = linalg.solve_banded((1, 1), ab, rhs)
    out = np.zeros_like(g)
    out[1:-1] = u
    return out
