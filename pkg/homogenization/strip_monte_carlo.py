"""
Monte Carlo cross-check of the strip cell masses

Chains of the unscaled process (eps = 1) run regeneration cycles: from the
interface layer |x1| <= eta out to the far cell |x1| >= R - 1 and back into
the layer. x1 is reflected at +-R. The occupation time of each unit cell,
summed over cycles, is proportional to the invariant mass of the cell.
Reflection keeps mu invariant when the tails carry no net x1 flux
(x1-independent or gradient tails); otherwise the outermost cells are biased.
"""

import logging
import math
from dataclasses import dataclass, field as dataclass_field
from typing import Any, Dict, Optional

import numpy as np

from fields.drift_field import InterfaceDrift
from homogenization.errors import SimulationParameterError
from homogenization.strip_measure import first_fit_cell
from simulation.estimates import Estimate
from simulation.random_streams import run_blocks

logger = logging.getLogger(__name__)

STEPS_PER_CYCLE_CAP = 200.0


@dataclass(frozen=True)
class MonteCarloSettings:
    enabled: bool = False
    far_plane: int = 4
    chains: int = 64
    cycles: int = 20
    dt: float = 0.01

    @classmethod
    def from_config(cls, section: Optional[Dict[str, Any]]) -> 'MonteCarloSettings':
        section = (section or {}).get('monte_carlo', {}) or {}
        return cls(enabled=bool(section.get('enabled', False)),
                   far_plane=int(section.get('far_plane', 4)),
                   chains=int(section.get('chains', 64)),
                   cycles=int(section.get('cycles', 20)),
                   dt=float(section.get('dt', 0.01)))

    def reflecting_plane(self, half_width: float) -> int:
        return first_fit_cell(half_width) + self.far_plane


@dataclass
class MonteCarloMasses:
    """Mean occupation per cycle of the cells C_j+ and C_j- (j = 0..R-1) with standard errors"""

    plus: np.ndarray
    minus: np.ndarray
    plus_se: np.ndarray
    minus_se: np.ndarray
    q_plus: Estimate
    R: int
    chains: int
    cycles: int
    mean_cycle_time: float
    params: Dict[str, Any] = dataclass_field(default_factory=dict)

    @property
    def q_minus(self) -> float:
        return 1.0 - self.q_plus.value

    def to_dict(self) -> Dict[str, Any]:
        return {
            'R': self.R, 'chains': self.chains, 'cycles': self.cycles,
            'mean_cycle_time': self.mean_cycle_time,
            'q_plus': self.q_plus.to_dict(), 'q_minus': self.q_minus,
            'masses_plus': self.plus.tolist(), 'masses_minus': self.minus.tolist(),
            'se_plus': self.plus_se.tolist(), 'se_minus': self.minus_se.tolist(),
            'params': self.params,
        }


def _reflect(x1: np.ndarray, R: float) -> np.ndarray:
    over = np.abs(x1) > R
    return np.where(over, np.sign(x1) * (2.0 * R - np.abs(x1)), x1)


def _standard_error(samples: np.ndarray) -> np.ndarray:
    return np.std(samples, axis=0, ddof=1) / math.sqrt(samples.shape[0])


def estimate_cell_masses_mc(field: InterfaceDrift, R: int, n_chains: int, cycles: int, seed: int,
                            dt: float = 0.01, fit_from: Optional[int] = None, block_size: int = 16,
                            threads: int = 1) -> MonteCarloMasses:
    """
    Cell masses from regeneration cycles of the unscaled process

    q+ is estimated chain by chain as the share of the + side in the mean
    occupation of the cells j = fit_from..R-1 (default: the first cell
    beyond eta + 1), and averaged across chains.

    Raises:
        SimulationParameterError: if R leaves no cells to average or sizes are invalid
    """
    eta = field.half_width
    fit_from = first_fit_cell(eta) if fit_from is None else int(fit_from)
    if R <= fit_from + 1:
        raise SimulationParameterError(f"Reflecting plane R = {R} must exceed {fit_from + 1}")
    if cycles < 1 or n_chains < 2:
        raise SimulationParameterError("Need at least one cycle and two chains")
    if not dt > 0:
        raise SimulationParameterError(f"dt must be positive, got {dt}")
    d = field.dimension
    root = math.sqrt(dt)
    far = R - 1.0
    max_steps = int(STEPS_PER_CYCLE_CAP * cycles * R * R / dt)

    def worker(m: int, rng: np.random.Generator) -> Dict[str, np.ndarray]:
        x = np.zeros((m, d))
        x[:, 0] = np.where(rng.random(m) < 0.5, eta, -eta)
        x[:, 1:] = rng.random((m, d - 1))
        occupation = np.zeros((m, 2 * R))
        outbound = np.ones(m, dtype=bool)
        done = np.zeros(m, dtype=int)
        clock = np.zeros(m)
        rows = np.arange(m)
        for _ in range(max_steps):
            active = done < cycles
            if not active.any():
                break
            cell = np.clip(np.floor(x[:, 0]).astype(int) + R, 0, 2 * R - 1)
            np.add.at(occupation, (rows[active], cell[active]), dt)
            clock += dt * active
            step = field(x) * dt + root * rng.standard_normal(x.shape)
            x = np.where(active[:, None], x + step, x)
            x[:, 0] = _reflect(x[:, 0], R)
            reached = outbound & (np.abs(x[:, 0]) >= far)
            returned = ~outbound & (np.abs(x[:, 0]) <= eta)
            outbound = np.where(reached, False, np.where(returned, True, outbound))
            done += returned & active
        return {'occupation': occupation, 'done': done, 'clock': clock}

    logger.info(f"Monte Carlo cell masses: {n_chains} chains x {cycles} cycles, R = {R}, dt = {dt:g}")
    blocks = run_blocks(worker, n_chains, seed, 'cell_masses', block_size, threads)
    occupation = np.concatenate([b['occupation'] for b in blocks])
    done = np.concatenate([b['done'] for b in blocks])
    clock = np.concatenate([b['clock'] for b in blocks])
    if np.any(done < cycles):
        raise SimulationParameterError(
            f"{int(np.sum(done < cycles))} chains did not finish {cycles} cycles within {max_steps} steps")

    per_cycle = occupation / cycles
    plus = per_cycle[:, R:]
    minus = per_cycle[:, :R][:, ::-1]
    outer = slice(fit_from, R)
    share = plus[:, outer].sum(axis=1) / (plus[:, outer].sum(axis=1) + minus[:, outer].sum(axis=1))
    q_plus = Estimate.from_samples(share, 'monte_carlo_q_plus', seed,
                                   {'R': R, 'fit_from': fit_from, 'dt': dt})
    result = MonteCarloMasses(plus=plus.mean(axis=0), minus=minus.mean(axis=0), plus_se=_standard_error(plus),
                              minus_se=_standard_error(minus), q_plus=q_plus, R=R, chains=n_chains, cycles=cycles,
                              mean_cycle_time=float(clock.mean() / cycles),
                              params={'seed': seed, 'field': field.name})
    logger.info(f"Monte Carlo q+ = {q_plus.value:.4f} +- {q_plus.se:.4f}")
    return result
