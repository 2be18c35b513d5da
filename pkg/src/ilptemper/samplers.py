"""Proposal kernels with Metropolis-Hastings correction.

Two samplers are provided:

* multi-step locally balanced proposals (MLBP-L): L distinct flip indices are
  drawn sequentially without replacement from the single-flip proposal with
  weights ``sqrt(pi(x^-j) / pi(x))``, and the joint move is accepted with
  the ratio ``exp(sum_j d_j(x)) * prod_j wbar_j(y) / wbar_j(x)``.  With
  ``L=1`` this is the exact locally balanced proposal and the chain is
  reversible with respect to ``exp(-E/tau)``.
* random-walk Metropolis (RWM): one uniformly chosen flip.

These functions are the readable reference path.  The ensemble driver uses
the compiled ``run_chain`` kernel, which consumes the same uniforms in the
same order and therefore reproduces these steps exactly.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _pykernels
from .core import ChainState, apply_flips, check_flip_set, flip_deltas
from .errors import ConfigInvalid, InsufficientSupport, NonPositiveTemperature


@dataclass(frozen=True)
class ProposalKind:
    """Proposal family.

    ``joint_energy=True`` replaces the sum of single-flip log-ratios in the
    acceptance ratio by the exact energy difference of the joint move.  The
    two coincide for ``L=1``.
    """

    variant: str = "mlbp"
    L: int = 1
    joint_energy: bool = False

    def __post_init__(self):
        if self.variant not in ("mlbp", "rwm"):
            raise ConfigInvalid(f"unknown proposal {self.variant!r}")
        if self.L < 1:
            raise ConfigInvalid(f"L must be >= 1, got {self.L}")
        if self.variant == "rwm" and self.L != 1:
            raise ConfigInvalid("RWM flips exactly one bit; L must be 1")

    def validate(self, n):
        if self.L > n:
            raise ConfigInvalid(f"L={self.L} exceeds n={n}")

    @property
    def width(self):
        """Uniform variates consumed per step."""
        return self.L + 1 if self.variant == "mlbp" else 2


@dataclass
class ProposalOutcome:
    J: np.ndarray
    log_ratio: float
    accepted: bool
    new_state: ChainState


def _check_tau(tau):
    if not (tau > 0 and math.isfinite(tau)):
        raise NonPositiveTemperature(f"temperature must be > 0, got {tau}")


def lbp_log_weights(deltas, tau):
    """Unnormalized log-weights ``d_j / 2`` with ``d_j = -deltas[j] / tau``."""
    _check_tau(tau)
    return -np.asarray(deltas, dtype=np.float64) / (2.0 * tau)


def normalized_log_weights(log_weights):
    lw = np.asarray(log_weights, dtype=np.float64)
    return lw - _pykernels.logsumexp(lw)


def sample_indices(log_weights, L, rng):
    """Draw L distinct indices by sequential categorical sampling.

    Each draw renormalizes over the indices not yet taken and inverts the
    cumulative weights in index order, consuming one uniform per draw.
    """
    lw = np.asarray(log_weights, dtype=np.float64)
    n = lw.size
    if not 1 <= L <= n:
        raise ConfigInvalid(f"need 1 <= L <= {n}, got {L}")
    if np.count_nonzero(np.isfinite(lw)) < L:
        raise InsufficientSupport(f"fewer than {L} indices with positive weight")
    us = rng.random(L)
    return _pykernels.draw_without_replacement(lw, L, us)


def _log_ratio(inst, s, y, J, params, tau, joint):
    lw_x = lbp_log_weights(flip_deltas(inst, s, params), tau)
    lw_y = lbp_log_weights(flip_deltas(inst, y, params), tau)
    lse_x = _pykernels.logsumexp(lw_x)
    lse_y = _pykernels.logsumexp(lw_y)
    if joint:
        e_term = (s.obj + params.lam * s.viol - (y.obj + params.lam * y.viol)) / tau
    else:
        e_term = float(np.sum(2.0 * lw_x[J]))
    return e_term + float(np.sum(lw_y[J] - lse_y)) - float(np.sum(lw_x[J] - lse_x))


def mh_log_ratio_mlbp(inst, s, J, params, tau, L, joint_energy=False):
    """Log acceptance ratio of flipping the set ``J`` from state ``s``."""
    _check_tau(tau)
    J = check_flip_set(inst, J)
    if J.size != L:
        raise ConfigInvalid(f"|J|={J.size} but L={L}")
    y = apply_flips(inst, s, J, params)
    return _log_ratio(inst, s, y, J, params, tau, joint_energy)


def mlbp_step(inst, s, params, tau, L, rng, joint_energy=False):
    _check_tau(tau)
    lw = lbp_log_weights(flip_deltas(inst, s, params), tau)
    J = sample_indices(lw, L, rng)
    y = apply_flips(inst, s, J, params)
    log_r = _log_ratio(inst, s, y, J, params, tau, joint_energy)
    u = rng.random()
    if u < math.exp(min(0.0, log_r)):
        return ProposalOutcome(J, log_r, True, y)
    return ProposalOutcome(J, log_r, False, s)


def rwm_step(inst, s, params, tau, rng):
    _check_tau(tau)
    u = rng.random(2)
    j = min(int(u[0] * inst.n), inst.n - 1)
    delta = float(flip_deltas(inst, s, params)[j])
    log_r = -delta / tau
    J = np.array([j], dtype=np.int64)
    if u[1] < math.exp(min(0.0, log_r)):
        return ProposalOutcome(J, log_r, True, apply_flips(inst, s, J, params))
    return ProposalOutcome(J, log_r, False, s)
