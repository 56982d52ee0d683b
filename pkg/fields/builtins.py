"""
Builtin interface drifts

  zero         b = 0
  paper_shear  d = 2, b = (0, a * bump(x1 / eta)), vanishing outside the strip
  torus_shear  b = (0, c sin 2 pi x1, 0, ...) on both sides
  gradient1d   b1 = -V'(x1) with V a trigonometric polynomial, other components 0
  two_sided    gradient tails V+- = A+- cos 2 pi x1 plus shear c+- sin 2 pi x1,
               joined by a smooth switch across [-eta, eta], with an optional
               bump of amplitude a in b2
"""

import logging
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from fields.drift_field import InterfaceDrift, PeriodicDrift
from fields.profiles import bump, bump_mass, smooth_switch
from homogenization.errors import ConfigError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


def _param(params: Dict[str, Any], key: str, default: Any, kind=float):
    value = params.get(key, default)
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"Parameter {key!r} must be {kind.__name__}, got {value!r}")


def _dimension(params: Dict[str, Any]) -> int:
    d = _param(params, 'dimension', 2, int)
    if d < 2:
        raise ConfigError(f"Parameter 'dimension' must be at least 2, got {d}")
    return d


def _half_width(params: Dict[str, Any]) -> float:
    eta = _param(params, 'half_width', params.get('eta', 1.0))
    if not eta > 0:
        raise ConfigError(f"Parameter 'half_width' must be positive, got {eta}")
    return eta


def _shared_tails(d: int, evaluator: Callable, name: str) -> Tuple[PeriodicDrift, PeriodicDrift]:
    tail = PeriodicDrift(d, evaluator, name)
    return tail, tail


def potential_force(cos_coeffs: Sequence[float], sin_coeffs: Sequence[float]) -> Callable:
    """Return x1 -> -V'(x1) for V = sum a_k cos 2 pi k x1 + s_k sin 2 pi k x1"""
    cos_coeffs = [float(a) for a in cos_coeffs]
    sin_coeffs = [float(s) for s in sin_coeffs]

    def force(x1: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x1)
        for k, a in enumerate(cos_coeffs, start=1):
            if a:
                out += TWO_PI * k * a * np.sin(TWO_PI * k * x1)
        for k, s in enumerate(sin_coeffs, start=1):
            if s:
                out -= TWO_PI * k * s * np.cos(TWO_PI * k * x1)
        return out

    return force


def potential(cos_coeffs: Sequence[float], sin_coeffs: Sequence[float]) -> Callable:
    """Return x1 -> V(x1) matching potential_force"""
    def value(x1: np.ndarray) -> np.ndarray:
        x1 = np.asarray(x1, dtype=float)
        out = np.zeros_like(x1)
        for k, a in enumerate(cos_coeffs, start=1):
            out += float(a) * np.cos(TWO_PI * k * x1)
        for k, s in enumerate(sin_coeffs, start=1):
            out += float(s) * np.sin(TWO_PI * k * x1)
        return out
    return value


# ===== BUILTINS =====

def zero_field(params: Dict[str, Any]) -> InterfaceDrift:
    d = _dimension(params)

    def evaluator(x: np.ndarray) -> np.ndarray:
        return np.zeros_like(x, dtype=float)

    plus, minus = _shared_tails(d, evaluator, 'zero')
    return InterfaceDrift(d, _half_width(params), evaluator, plus, minus, 'zero', dict(params))


def paper_shear_field(params: Dict[str, Any]) -> InterfaceDrift:
    eta = _half_width(params)
    amplitude = _param(params, 'amplitude', 1.0)
    if _param(params, 'dimension', 2, int) != 2:
        raise ConfigError("paper_shear is defined in dimension 2 only")

    def evaluator(x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x, dtype=float)
        out[..., 1] = amplitude * bump(x[..., 0] / eta)
        return out

    def vanishing(x: np.ndarray) -> np.ndarray:
        return np.zeros_like(x, dtype=float)

    plus, minus = _shared_tails(2, vanishing, 'zero')
    return InterfaceDrift(2, eta, evaluator, plus, minus, 'paper_shear',
                          {'amplitude': amplitude, 'half_width': eta})


def paper_shear_integral(field: InterfaceDrift) -> float:
    """Exact integral of the paper_shear profile: amplitude * eta * bump mass"""
    return field.params['amplitude'] * field.half_width * bump_mass()


def torus_shear_field(params: Dict[str, Any]) -> InterfaceDrift:
    d = _dimension(params)
    c = _param(params, 'c', params.get('amplitude', 1.0))

    def evaluator(x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x, dtype=float)
        out[..., 1] = c * np.sin(TWO_PI * x[..., 0])
        return out

    plus, minus = _shared_tails(d, evaluator, 'torus_shear')
    return InterfaceDrift(d, _half_width(params), evaluator, plus, minus, 'torus_shear',
                          {'c': c, 'dimension': d})


def gradient1d_field(params: Dict[str, Any]) -> InterfaceDrift:
    d = _dimension(params)
    cos_coeffs = params.get('cos_coeffs')
    if cos_coeffs is None:
        cos_coeffs = [_param(params, 'amplitude', 1.0)]
    sin_coeffs = params.get('sin_coeffs', [])
    if not isinstance(cos_coeffs, (list, tuple)) or not isinstance(sin_coeffs, (list, tuple)):
        raise ConfigError("gradient1d coefficients must be lists")
    force = potential_force(cos_coeffs, sin_coeffs)

    def evaluator(x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x, dtype=float)
        out[..., 0] = force(x[..., 0])
        return out

    plus, minus = _shared_tails(d, evaluator, 'gradient1d')
    return InterfaceDrift(d, _half_width(params), evaluator, plus, minus, 'gradient1d',
                          {'cos_coeffs': list(cos_coeffs), 'sin_coeffs': list(sin_coeffs),
                           'dimension': d})


def two_sided_field(params: Dict[str, Any]) -> InterfaceDrift:
    d = _dimension(params)
    eta = _half_width(params)
    a_plus = _param(params, 'A_plus', 1.0)
    a_minus = _param(params, 'A_minus', 0.0)
    c_plus = _param(params, 'c_plus', 0.0)
    c_minus = _param(params, 'c_minus', 1.0)
    amplitude = _param(params, 'amplitude', 0.0)

    force_plus = potential_force([a_plus], [])
    force_minus = potential_force([a_minus], [])

    def tail(a_force: Callable, c: float) -> Callable:
        def evaluator(x: np.ndarray) -> np.ndarray:
            out = np.zeros_like(x, dtype=float)
            out[..., 0] = a_force(x[..., 0])
            out[..., 1] = c * np.sin(TWO_PI * x[..., 0])
            return out
        return evaluator

    plus_eval = tail(force_plus, c_plus)
    minus_eval = tail(force_minus, c_minus)

    def evaluator(x: np.ndarray) -> np.ndarray:
        chi = smooth_switch((x[..., 0] + eta) / (2.0 * eta))[..., None]
        out = chi * plus_eval(x) + (1.0 - chi) * minus_eval(x)
        if amplitude:
            out[..., 1] += amplitude * bump(x[..., 0] / eta)
        return out

    plus = PeriodicDrift(d, plus_eval, 'two_sided_plus')
    minus = PeriodicDrift(d, minus_eval, 'two_sided_minus')
    return InterfaceDrift(d, eta, evaluator, plus, minus, 'two_sided',
                          {'A_plus': a_plus, 'A_minus': a_minus, 'c_plus': c_plus,
                           'c_minus': c_minus, 'amplitude': amplitude,
                           'half_width': eta, 'dimension': d})


BUILTINS: Dict[str, Callable[[Dict[str, Any]], InterfaceDrift]] = {
    'zero': zero_field,
    'paper_shear': paper_shear_field,
    'torus_shear': torus_shear_field,
    'gradient1d': gradient1d_field,
    'two_sided': two_sided_field,
}


def builtin_field(name: str, params: Optional[Dict[str, Any]] = None) -> InterfaceDrift:
    """
    Build a named builtin drift

    Only the parameters are checked here. Sampling checks need a grid and
    run in validate_drift, which build_model calls before any solve.

    Args:
        name: one of zero, paper_shear, torus_shear, gradient1d, two_sided
        params: amplitudes and profile parameters

    Returns:
        InterfaceDrift

    Raises:
        ConfigError: unknown name or malformed parameters
    """
    if name not in BUILTINS:
        raise ConfigError(f"Unknown builtin field {name!r}; choose from {sorted(BUILTINS)}")
    params = dict(params or {})
    if not all(isinstance(k, str) for k in params):
        raise ConfigError("Field parameter names must be strings")
    field = BUILTINS[name](params)
    logger.debug(f"Built field '{name}' with params {field.params}")
    return field


def field_from_config(section: Dict[str, Any]) -> InterfaceDrift:
    """Build a field from the `field` config section (builtin or expression)"""
    name = section.get('name', 'zero')
    if name == 'expression':
        from fields.expression import expression_field
        return expression_field(
            components=section.get('components'),
            half_width=section.get('half_width', 1.0),
            plus_components=section.get('plus_components'),
            minus_components=section.get('minus_components'),
        )
    return builtin_field(name, section.get('params') or {})
