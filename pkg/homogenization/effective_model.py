"""
Effective limit model: transmissivities, interface drift, local-time vector
and the diffusion factors used to simulate the limit process.
"""

import logging
import math
from dataclasses import dataclass, field as dataclass_field, replace
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from homogenization.compensator import CorrectedDrift
from homogenization.errors import DiscretizationError, ModelInvariantError
from homogenization.strip_measure import StripMeasure
from homogenization.torus_cell import DiffusionTensor

logger = logging.getLogger(__name__)

MatrixLike = Union[np.ndarray, DiffusionTensor, Sequence[Sequence[float]]]


def _matrix(value: MatrixLike) -> np.ndarray:
    if isinstance(value, DiffusionTensor):
        return np.array(value.matrix, dtype=float)
    return np.array(value, dtype=float)


# ===== TRANSMISSIVITY =====

def transmissivity(q_plus: float, q_minus: float, d11_plus: float, d11_minus: float) -> Tuple[float, float]:
    """
    p+ = q+ D+_11 / (q+ D+_11 + q- D-_11), p- = 1 - p+

    Raises:
        ModelInvariantError: for non-positive inputs
    """
    for name, value in (('q+', q_plus), ('q-', q_minus), ('D+_11', d11_plus), ('D-_11', d11_minus)):
        if not value > 0:
            raise ModelInvariantError(f"{name} must be positive, got {value}")
    flux_plus = q_plus * d11_plus
    p_plus = flux_plus / (flux_plus + q_minus * d11_minus)
    return p_plus, 1.0 - p_plus


def skew_parameter(p_plus: float, p_minus: float, d11_plus: float, d11_minus: float) -> float:
    """Parameter of the skew Brownian motion Z with X_1 = sqrt(D+-_11) Z"""
    weighted = p_plus * math.sqrt(d11_minus)
    return weighted / (weighted + p_minus * math.sqrt(d11_plus))


def lower_factor(matrix: np.ndarray) -> np.ndarray:
    """
    Factor M with M M^T = D and first row (sqrt(D_11), 0, ..., 0)

    A symmetric square root from the eigendecomposition is rotated to lower
    triangular form with a QR decomposition of its transpose.

    Raises:
        ModelInvariantError: if D is not symmetric positive semidefinite
    """
    matrix = np.asarray(matrix, dtype=float)
    if np.max(np.abs(matrix - matrix.T)) > 1e-12:
        raise ModelInvariantError("Diffusion tensor is not symmetric")
    values, vectors = linalg.eigh(matrix)
    if values.min() < -1e-10:
        raise ModelInvariantError(f"Diffusion tensor not positive semidefinite (eigenvalue {values.min():.3e})")
    root = vectors * np.sqrt(np.clip(values, 0.0, None))
    _, upper = linalg.qr(root.T)
    factor = upper.T
    signs = np.where(np.diag(factor) < 0, -1.0, 1.0)
    factor = factor * signs[None, :]
    factor[0, :] = 0.0
    factor[0, 0] = math.sqrt(matrix[0, 0])
    return factor


# ===== MODEL =====

@dataclass
class EffectiveModel:
    D_plus: np.ndarray
    D_minus: np.ndarray
    q_plus: float
    q_minus: float
    p_plus: float
    p_minus: float
    alpha: np.ndarray
    K: np.ndarray
    M_plus: np.ndarray
    M_minus: np.ndarray
    skew_p: float
    diagnostics: Dict[str, Any] = dataclass_field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.D_plus.shape[0]

    def d11(self, side: str) -> float:
        return float((self.D_plus if side == 'plus' else self.D_minus)[0, 0])

    def factor(self, side: str) -> np.ndarray:
        return self.M_plus if side == 'plus' else self.M_minus

    @property
    def local_time_factor(self) -> float:
        """L^{X_1} = (p sqrt(D+_11) + (1 - p) sqrt(D-_11)) L^Z for symmetric local times"""
        return self.skew_p * math.sqrt(self.d11('plus')) + (1.0 - self.skew_p) * math.sqrt(self.d11('minus'))

    def check(self, tol: float = 1e-10):
        """
        Raises:
            ModelInvariantError: if any structural identity fails
        """
        if self.p_plus + self.p_minus != 1.0:
            raise ModelInvariantError(f"p+ + p- = {self.p_plus + self.p_minus!r}")
        if self.K[0] != self.p_plus - self.p_minus or not np.array_equal(self.K[1:], self.alpha):
            raise ModelInvariantError("K must equal (p+ - p-, alpha)")
        if not 0.0 < self.skew_p < 1.0:
            raise ModelInvariantError(f"Skew parameter {self.skew_p} outside (0, 1)")
        for side in ('plus', 'minus'):
            M = self.factor(side)
            D = self.D_plus if side == 'plus' else self.D_minus
            gap = float(np.max(np.abs(M @ M.T - D)))
            if gap > tol:
                raise ModelInvariantError(f"M{side} M{side}^T differs from D{side} by {gap:.2e}")
            if M[0, 0] != math.sqrt(D[0, 0]) or np.any(M[0, 1:] != 0.0):
                raise ModelInvariantError(f"First row of M{side} is not (sqrt(D11), 0, ...)")

    def to_dict(self, provenance: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        return {
            'D_plus': self.D_plus.tolist(),
            'D_minus': self.D_minus.tolist(),
            'q': {'plus': self.q_plus, 'minus': self.q_minus},
            'p': {'plus': self.p_plus, 'minus': self.p_minus},
            'alpha': self.alpha.tolist(),
            'K': self.K.tolist(),
            'M_plus': self.M_plus.tolist(),
            'M_minus': self.M_minus.tolist(),
            'skew_p': self.skew_p,
            'diagnostics': self.diagnostics,
            'provenance': provenance or {},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'EffectiveModel':
        return assemble_model(data['D_plus'], data['D_minus'], data['q']['plus'], data['q']['minus'],
                              data['alpha'], diagnostics=data.get('diagnostics', {}))


def assemble_model(D_plus: MatrixLike, D_minus: MatrixLike, q_plus: float, q_minus: float,
                   alpha: Sequence[float], diagnostics: Optional[Dict[str, Any]] = None) -> EffectiveModel:
    """
    Assemble (D+-, q+-, p+-, alpha, K, M+-, p) from the homogenized coefficients

    Raises:
        ModelInvariantError: D+- not PSD or dimensions inconsistent
    """
    D_plus, D_minus = _matrix(D_plus), _matrix(D_minus)
    alpha = np.atleast_1d(np.array(alpha, dtype=float))
    d = D_plus.shape[0]
    if D_plus.shape != (d, d) or D_minus.shape != (d, d) or alpha.shape != (d - 1,):
        raise ModelInvariantError(f"Inconsistent shapes: D+ {D_plus.shape}, D- {D_minus.shape}, alpha {alpha.shape}")
    M_plus, M_minus = lower_factor(D_plus), lower_factor(D_minus)
    p_plus, p_minus = transmissivity(q_plus, q_minus, D_plus[0, 0], D_minus[0, 0])
    K = np.concatenate([[p_plus - p_minus], alpha])
    model = EffectiveModel(
        D_plus=D_plus, D_minus=D_minus, q_plus=float(q_plus), q_minus=float(q_minus),
        p_plus=p_plus, p_minus=p_minus, alpha=alpha, K=K, M_plus=M_plus, M_minus=M_minus,
        skew_p=skew_parameter(p_plus, p_minus, D_plus[0, 0], D_minus[0, 0]),
        diagnostics=dict(diagnostics or {}),
    )
    model.check()
    return model


def asymptotic_side_probability(model: EffectiveModel) -> float:
    """Long-run fraction of time the limit process spends on the + side"""
    return skew_parameter(model.p_plus, model.p_minus, model.d11('plus'), model.d11('minus'))


def reflect_model(model: EffectiveModel) -> EffectiveModel:
    """Model of the mirrored field x1 -> -x1: sides swapped, D conjugated by diag(-1, 1, ...)"""
    flip = np.ones(model.dimension)
    flip[0] = -1.0
    conj = np.outer(flip, flip)
    return assemble_model(model.D_minus * conj, model.D_plus * conj, model.q_minus, model.q_plus,
                          model.alpha, diagnostics={'reflected': True})


# ===== INTERFACE DRIFT =====

def interface_drift_vector(b_tilde: CorrectedDrift, mu: StripMeasure, p_plus: float,
                           d11_plus: float, d11_minus: float) -> Tuple[np.ndarray, float]:
    """
    alpha_j = 2 (p+/D+_11 + p-/D-_11) * integral of b~_j against mu, j = 2..d

    Returns:
        (alpha, diagnostic x1-integral with the same prefactor)

    Raises:
        DiscretizationError: if b~ does not vanish near the strip ends
    """
    x1 = b_tilde.grid.strip_x1_nodes()
    near_ends = np.abs(x1) >= b_tilde.grid.strip_half_width - 1
    edge = float(np.abs(b_tilde.values[:, near_ends]).max(initial=0.0))
    if edge > 1e-8:
        raise DiscretizationError(f"Corrected drift reaches the strip boundary (|b~| = {edge:.2e})",
                                  stage='effective_model')
    prefactor = 2.0 * (p_plus / d11_plus + (1.0 - p_plus) / d11_minus)
    integrals = mu.integrate(b_tilde.values)
    return prefactor * integrals[1:], float(prefactor * integrals[0])


# ===== GLUING =====

@dataclass(frozen=True)
class GluingTestFunction:
    """
    f(x) = s+- x1 + kappa/2 x1^2 + beta . x_par, with s+ for x1 > 0 and s- for x1 <= 0
    """

    slope_plus: float
    slope_minus: float
    tangential: Tuple[float, ...]
    curvature: float = 0.0

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        x1 = x[..., 0]
        slope = np.where(x1 > 0, self.slope_plus, self.slope_minus)
        return slope * x1 + 0.5 * self.curvature * x1 ** 2 + x[..., 1:] @ np.asarray(self.tangential)

    def generator(self, x: np.ndarray, model: EffectiveModel) -> np.ndarray:
        """Limit generator away from the interface: 1/2 D+-_11 kappa"""
        x1 = np.asarray(x, dtype=float)[..., 0]
        d11 = np.where(x1 > 0, model.d11('plus'), model.d11('minus'))
        return 0.5 * d11 * self.curvature


def gluing_residual(f: GluingTestFunction, model: EffectiveModel) -> float:
    """p+ d1 f|+ - p- d1 f|- + sum_j alpha_j d_j f"""
    return (model.p_plus * f.slope_plus - model.p_minus * f.slope_minus
            + float(np.dot(model.alpha, f.tangential)))


def glued_test_function(model: EffectiveModel, slope_minus: float = 0.0,
                        tangential: Optional[Sequence[float]] = None,
                        curvature: float = 0.0) -> GluingTestFunction:
    """Test function whose + slope is chosen so that the gluing residual vanishes"""
    if tangential is None:
        tangential = np.zeros(model.dimension - 1)
    tangential = tuple(float(t) for t in tangential)
    if len(tangential) != model.dimension - 1:
        raise ValueError(f"Need {model.dimension - 1} tangential derivatives, got {len(tangential)}")
    slope_plus = (model.p_minus * slope_minus - float(np.dot(model.alpha, tangential))) / model.p_plus
    return GluingTestFunction(slope_plus=slope_plus, slope_minus=float(slope_minus),
                              tangential=tangential, curvature=float(curvature))


# ===== NEGATIVE CONTROLS =====

def perturbed_model(model: EffectiveModel, control: str) -> EffectiveModel:
    """
    Deliberately wrong model used to test the power of the statistical checks.

      alpha2x  alpha doubled; alpha shifted by +0.5 when every |alpha_j| < 0.25
      swap-p   p+- swapped; for near-symmetric models (|p+ - p-| < 0.2)
               the transmissivities are set to (0.8, 0.2) instead
    """
    if control == 'alpha2x':
        alpha = 2.0 * model.alpha if np.max(np.abs(model.alpha)) >= 0.25 else model.alpha + 0.5
        K = np.concatenate([[model.K[0]], alpha])
        return replace(model, alpha=alpha, K=K, diagnostics={'negative_control': control})
    if control == 'swap-p':
        if abs(model.p_plus - model.p_minus) >= 0.2:
            p_plus = model.p_minus
        else:
            p_plus = 0.8
        p_minus = 1.0 - p_plus
        return replace(model, p_plus=p_plus, p_minus=p_minus,
                       K=np.concatenate([[p_plus - p_minus], model.alpha]),
                       skew_p=skew_parameter(p_plus, p_minus, model.d11('plus'), model.d11('minus')),
                       diagnostics={'negative_control': control})
    raise ValueError(f"Unknown negative control {control!r}; choose alpha2x or swap-p")
