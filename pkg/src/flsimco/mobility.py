"""Vehicle velocity model: truncated Gaussian on a speed window.

Velocities are drawn per vehicle per round from a Gaussian restricted to
[v_min, v_max], normalized with the error function. erf is computed with
the classic Cody rational approximations so results are bit-stable across
platforms regardless of the local libm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_INV_SQRT_PI = 5.6418958354775628695e-1

# Cody's rational Chebyshev coefficients (accurate to ~1e-16 relative).
_ERF_A = (3.16112374387056560e0, 1.13864154151050156e2, 3.77485237685302021e2,
          3.20937758913846947e3, 1.85777706184603153e-1)
_ERF_B = (2.36012909523441209e1, 2.44024637934444173e2, 1.28261652607737228e3,
          2.84423683343917062e3)
_ERF_C = (5.64188496988670089e-1, 8.88314979438837594e0, 6.61191906371416295e1,
          2.98635138197400131e2, 8.81952221241769090e2, 1.71204761263407058e3,
          2.05107837782607147e3, 1.23033935479799725e3, 2.15311535474403846e-8)
_ERF_D = (1.57449261107098347e1, 1.17693950891312499e2, 5.37181101862009858e2,
          1.62138957456669019e3, 3.29079923573345963e3, 4.36261909014324716e3,
          3.43936767414372164e3, 1.23033935480374942e3)
_ERF_P = (3.05326634961232344e-1, 3.60344899949804439e-1, 1.25781726111229246e-1,
          1.60837851487422766e-2, 6.58749161529837803e-4, 1.63153871373020978e-2)
_ERF_Q = (2.56852019228982242e0, 1.87295284992346047e0, 5.27905102951428412e-1,
          6.05183413124413191e-2, 2.33520497626869185e-3)


def _erfc_scaled_tail(y: float) -> float:
    """erfc(y) for y > 0.46875 via Cody regions 2 and 3."""
    if y <= 4.0:
        xnum = _ERF_C[8] * y
        xden = y
        for i in range(7):
            xnum = (xnum + _ERF_C[i]) * y
            xden = (xden + _ERF_D[i]) * y
        result = (xnum + _ERF_C[7]) / (xden + _ERF_D[7])
    else:
        if y >= 26.543:
            return 0.0
        ysq = 1.0 / (y * y)
        xnum = _ERF_P[5] * ysq
        xden = ysq
        for i in range(4):
            xnum = (xnum + _ERF_P[i]) * ysq
            xden = (xden + _ERF_Q[i]) * ysq
        result = ysq * (xnum + _ERF_P[4]) / (xden + _ERF_Q[4])
        result = (_INV_SQRT_PI - result) / y
    # Split exp(-y^2) to limit cancellation, as in the reference routine.
    ysq16 = math.floor(y * 16.0) / 16.0
    delta = (y - ysq16) * (y + ysq16)
    return math.exp(-ysq16 * ysq16) * math.exp(-delta) * result


def erf(x: float) -> float:
    """Error function via rational approximation, |error| well below 1e-12."""
    y = abs(x)
    if y <= 0.46875:
        ysq = y * y if y > 1.11e-16 else 0.0
        xnum = _ERF_A[4] * ysq
        xden = ysq
        for i in range(3):
            xnum = (xnum + _ERF_A[i]) * ysq
            xden = (xden + _ERF_B[i]) * ysq
        return x * (xnum + _ERF_A[3]) / (xden + _ERF_B[3])
    erfc_y = _erfc_scaled_tail(y)
    return 1.0 - erfc_y if x > 0 else erfc_y - 1.0


@dataclass(frozen=True)
class MobilityParams:
    """Truncated Gaussian over vehicle speed, all values in m/s."""

    mu: float = 29.17
    sigma: float = 8.0
    v_min: float = 16.67
    v_max: float = 41.67

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.v_min < self.v_max:
            raise ValueError(f"require v_min < v_max, got [{self.v_min}, {self.v_max}]")

    def window_mass(self) -> float:
        """Probability the untruncated Gaussian assigns to [v_min, v_max]."""
        a = (self.v_min - self.mu) / (self.sigma * math.sqrt(2.0))
        b = (self.v_max - self.mu) / (self.sigma * math.sqrt(2.0))
        return 0.5 * (erf(b) - erf(a))


def truncated_gaussian_pdf(v: float, p: MobilityParams) -> float:
    """Density of the truncated Gaussian at v; zero outside [v_min, v_max].

    Normalized so the density integrates to one over the window.
    """
    if v < p.v_min or v > p.v_max:
        return 0.0
    z = (v - p.mu) / p.sigma
    kernel = math.exp(-0.5 * z * z) / (_SQRT_2PI * p.sigma)
    return kernel / p.window_mass()


def truncated_gaussian_cdf_grid(p: MobilityParams, n: int = 100_000) -> tuple[np.ndarray, np.ndarray]:
    """Trapezoidal CDF of the pdf on a uniform grid over the window.

    Serves as the quadrature oracle for distribution tests; independent of
    the closed-form normalizer used by the sampler.
    """
    grid = np.linspace(p.v_min, p.v_max, n + 1)
    dens = np.array([truncated_gaussian_pdf(float(v), p) for v in grid])
    steps = np.diff(grid)
    increments = 0.5 * (dens[1:] + dens[:-1]) * steps
    cdf = np.concatenate([[0.0], np.cumsum(increments)])
    return grid, cdf


def sample_velocity(rng: np.random.Generator, p: MobilityParams) -> float:
    """One velocity draw by rejection from the untruncated Gaussian.

    Retries until the draw lands in [v_min, v_max]; the window always has
    positive mass so this terminates.
    """
    while True:
        v = rng.normal(p.mu, p.sigma)
        if p.v_min <= v <= p.v_max:
            return float(v)


def sample_velocities(rng: np.random.Generator, p: MobilityParams, n: int) -> np.ndarray:
    """Vectorized rejection sampling of n velocities."""
    out = np.empty(n)
    filled = 0
    accept = max(p.window_mass(), 1e-6)
    while filled < n:
        need = n - filled
        draw = rng.normal(p.mu, p.sigma, size=int(need / accept) + 8)
        kept = draw[(draw >= p.v_min) & (draw <= p.v_max)][:need]
        out[filled:filled + kept.size] = kept
        filled += kept.size
    return out
