"""
Smooth one-dimensional profiles used to build interface drifts and blends
"""

from functools import lru_cache

import numpy as np
from scipy.integrate import quad


def bump(s: np.ndarray) -> np.ndarray:
    """C-infinity bump exp(-1/(1-s^2)) supported in (-1, 1)"""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


@lru_cache(maxsize=None)
def bump_mass() -> float:
    """Integral of the unit bump over (-1, 1)"""
    value, _ = quad(lambda s: float(np.exp(-1.0 / (1.0 - s * s))), -1.0, 1.0,
                    epsabs=1e-15, epsrel=1e-14, limit=200)
    return value


def smooth_switch(t: np.ndarray) -> np.ndarray:
    """C-infinity monotone switch: 0 for t <= 0, 1 for t >= 1"""
    t = np.asarray(t, dtype=float)
    out = np.where(t >= 1.0, 1.0, 0.0)
    inside = (t > 0.0) & (t < 1.0)
    ti = t[inside]
    left = np.exp(-1.0 / ti)
    right = np.exp(-1.0 / (1.0 - ti))
    out[inside] = left / (left + right)
    return out


def quintic_switch(t: np.ndarray) -> np.ndarray:
    """C2 smoothstep 6t^5 - 15t^4 + 10t^3 clamped to [0, 1]"""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t ** 3 * (t * (6.0 * t - 15.0) + 10.0)


SWITCHES = {
    'smooth': smooth_switch,
    'quintic': quintic_switch,
}
