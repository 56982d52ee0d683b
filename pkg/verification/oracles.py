"""
Reference values used by the statistical checks
"""

import math
from typing import Optional

import numpy as np
from scipy.integrate import quad
from scipy.linalg import solve_banded


def brownian_occupation(delta: float, lam: float, x: float = 0.0) -> float:
    """Closed-form resolvent u(x) of lam u - 1/2 u'' = 1{|x| < delta} on the line"""
    kappa = math.sqrt(2.0 * lam)
    if abs(x) < delta:
        return (1.0 - math.exp(-kappa * delta) * math.cosh(kappa * x)) / lam
    return math.sinh(kappa * delta) * math.exp(-kappa * abs(x)) / lam


def brownian_occupation_fd(delta: float, lam: float, x: float = 0.0, half_length: Optional[float] = None,
                           nodes: int = 20001) -> float:
    """
    Same resolvent by a tridiagonal finite-difference solve on [-R, R]

    R defaults to delta + 12 / sqrt(2 lam); Dirichlet zero data at +-R.
    """
    if half_length is None:
        half_length = delta + 12.0 / math.sqrt(2.0 * lam)
    grid = np.linspace(-half_length, half_length, nodes)
    h = grid[1] - grid[0]
    interior = grid[1:-1]
    m = interior.size
    off = -0.5 / h ** 2
    bands = np.zeros((3, m))
    bands[0, 1:] = off
    bands[1, :] = lam + 1.0 / h ** 2
    bands[2, :-1] = off
    # half weight at the indicator's jump keeps the scheme second order
    rhs = np.where(np.abs(interior) < delta, 1.0, 0.0)
    rhs[np.isclose(np.abs(interior), delta)] = 0.5
    u = solve_banded((1, 1), bands, rhs)
    return float(np.interp(x, interior, u))


def expected_local_time(t: float = 1.0) -> float:
    """E L_t of the symmetric local time at 0 of Brownian motion from 0: sqrt(2 t / pi)"""
    return math.sqrt(2.0 * t / math.pi)


def two_integral_d11(potential) -> float:
    """(int_0^1 e^{2V} int_0^1 e^{-2V})^{-1} by adaptive quadrature"""
    up, _ = quad(lambda s: math.exp(2.0 * float(potential(s))), 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    down, _ = quad(lambda s: math.exp(-2.0 * float(potential(s))), 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    return 1.0 / (up * down)


def kolmogorov_se(n: int, m: int) -> float:
    """Standard deviation of the two-sample KS statistic under the null, sd(K) sqrt(1/n + 1/m)"""
    return 0.2605 * math.sqrt(1.0 / n + 1.0 / m)
