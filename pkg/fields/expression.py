"""
Drifts given as expression strings in the variables x1..xd
"""

from typing import Callable, List, Optional, Sequence

import numpy as np

from fields.drift_field import InterfaceDrift, PeriodicDrift
from homogenization.errors import ConfigError

NAMESPACE = {
    'pi': np.pi,
    'sin': np.sin,
    'cos': np.cos,
    'exp': np.exp,
    'tanh': np.tanh,
    'sqrt': np.sqrt,
    'abs': np.abs,
    'where': np.where,
}


def compile_components(components: Sequence[str]) -> Callable[[np.ndarray], np.ndarray]:
    """
    Compile one expression per drift component into a vectorized evaluator

    Raises:
        ConfigError: on syntax errors or names outside x1..xd and NAMESPACE
    """
    if not components:
        raise ConfigError("Expression field needs one expression per component")
    d = len(components)
    variables = [f'x{k + 1}' for k in range(d)]
    allowed = set(NAMESPACE) | set(variables)
    compiled = []
    for text in components:
        try:
            code = compile(str(text), '<drift>', 'eval')
        except SyntaxError as exc:
            raise ConfigError(f"Cannot parse drift expression {text!r}: {exc.msg}")
        unknown = set(code.co_names) - allowed
        if unknown:
            raise ConfigError(f"Unknown names {sorted(unknown)} in drift expression {text!r}")
        compiled.append(code)

    def evaluator(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        scope = dict(NAMESPACE)
        scope.update({name: x[..., k] for k, name in enumerate(variables)})
        out = np.empty(x.shape, dtype=float)
        for k, code in enumerate(compiled):
            out[..., k] = eval(code, {'__builtins__': {}}, scope)
        return out

    return evaluator


def expression_field(components: List[str], half_width: float = 1.0,
                     plus_components: Optional[List[str]] = None,
                     minus_components: Optional[List[str]] = None) -> InterfaceDrift:
    """
    Interface drift from expressions; tails default to the full expression.

    The tails are only meaningful when the expressions are 1-periodic in
    every variable; validate_drift reports when they are not.
    """
    if not isinstance(components, (list, tuple)):
        raise ConfigError("field.components must be a list of expressions")
    d = len(components)
    if d < 2:
        raise ConfigError("Expression fields need at least two components")
    evaluator = compile_components(components)
    tails = []
    for side, exprs in (('plus', plus_components), ('minus', minus_components)):
        if exprs is None:
            tails.append(PeriodicDrift(d, evaluator, f'expression_{side}'))
            continue
        if len(exprs) != d:
            raise ConfigError(f"{side}_components needs {d} expressions, got {len(exprs)}")
        tails.append(PeriodicDrift(d, compile_components(exprs), f'expression_{side}'))
    return InterfaceDrift(d, float(half_width), evaluator, tails[0], tails[1], 'expression',
                          {'components': list(components), 'half_width': float(half_width),
                           'plus_components': plus_components,
                           'minus_components': minus_components})
