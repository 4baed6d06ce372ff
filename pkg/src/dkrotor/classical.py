"""Classical limit: standard map and doubly-kicked map ensembles.

The scaled momentum variable is P = p*T, which makes the single-kick map
parameter-free except for K:

    P' = P + K sin(theta),   theta' = (theta + P') mod 2pi.

P coincides with the quantum kbar*m, so ensemble <P^2> is directly comparable
to expectation_p2.  Monte Carlo diffusion estimates drive each trajectory
from a counter-based stream keyed by (seed, trajectory index), so results are
independent of blocking and worker count.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .analysis import ols_slope
from .rng import uniform_stream

# Trajectories per reduction block; fixed so serial/parallel sums agree.
BLOCK = 4096


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ClassicalEnsemble:
    """Angles in [0, 2pi) and scaled momenta P = p*T of the ensemble."""

    thetas: np.ndarray
    momenta: np.ndarray
    rng_seed: int = 0

    def __post_init__(self):
        th = np.asarray(self.thetas, dtype=float)
        p = np.asarray(self.momenta, dtype=float)
        if th.shape != p.shape or th.ndim != 1:
            raise ValueError("thetas and momenta must be 1-d arrays of equal length")
        object.__setattr__(self, "thetas", _frozen(np.mod(th, 2.0 * np.pi)))
        object.__setattr__(self, "momenta", _frozen(p))

    @property
    def size(self) -> int:
        return self.thetas.size


def ensemble_init(n_traj: int, seed: int = 0) -> ClassicalEnsemble:
    """Uniform-random angles, zero momentum; per-trajectory streams."""
    thetas = 2.0 * np.pi * uniform_stream(seed, np.arange(n_traj))
    return ClassicalEnsemble(thetas=thetas, momenta=np.zeros(n_traj), rng_seed=seed)


def standard_map_step(ens: ClassicalEnsemble, K: float) -> ClassicalEnsemble:
    """One kick plus one unit drift of the standard map."""
    if K < 0:
        raise ValueError("K must be >= 0")
    P = ens.momenta + K * np.sin(ens.thetas)
    theta = np.mod(ens.thetas + P, 2.0 * np.pi)
    return ClassicalEnsemble(thetas=theta, momenta=P, rng_seed=ens.rng_seed)


def doubly_kicked_step(
    ens: ClassicalEnsemble, K: float, r: float, lambda0: float, n: int
) -> ClassicalEnsemble:
    """Period n of the classical doubly-kicked map.

    Matches the quantum window semantics: kick, drift lambda(n), kick,
    drift 1-lambda(n), with lambda(n) = lambda0 + n*(r-1) wrapped into [0,1).
    """
    if K < 0:
        raise ValueError("K must be >= 0")
    lam = float(np.mod(lambda0 + n * (r - 1.0), 1.0))
    P = ens.momenta + K * np.sin(ens.thetas)
    theta = ens.thetas + P * lam
    P = P + K * np.sin(np.mod(theta, 2.0 * np.pi))
    theta = np.mod(theta + P * (1.0 - lam), 2.0 * np.pi)
    return ClassicalEnsemble(thetas=theta, momenta=P, rng_seed=ens.rng_seed)


def estimate_D_cl(
    K: float,
    n_traj: int = 100_000,
    n_steps: int = 200,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte Carlo diffusion constant of the standard map.

    Returns (D, stderr): the least-squares slope of <P^2> versus step over
    the second half of the run, starting from uniform angles and P = 0.
    For K ~ 10 use n_traj >= 1e4 and n_steps >= 100.  Below K = 5 the
    classical diffusion is not fully ergodic and the estimate is unreliable
    (warned).
    """
    if K < 0:
        raise ValueError("K must be >= 0")
    if K < 5:
        warnings.warn(
            f"K={K} < 5: classical diffusion is not fully ergodic; "
            "the estimate may be unreliable",
            stacklevel=2,
        )
    if n_traj < 10_000 or n_steps < 100:
        warnings.warn(
            "n_traj < 1e4 or n_steps < 100: below the recommended sampling "
            "for a reliable diffusion estimate",
            stacklevel=2,
        )
    n_blocks = (n_traj + BLOCK - 1) // BLOCK
    block_sums = np.zeros((n_steps, n_blocks))
    for b in range(n_blocks):
        lo = b * BLOCK
        hi = min(lo + BLOCK, n_traj)
        theta = 2.0 * np.pi * uniform_stream(seed, np.arange(lo, hi))
        P = np.zeros(hi - lo)
        for s in range(n_steps):
            P = P + K * np.sin(theta)
            theta = np.mod(theta + P, 2.0 * np.pi)
            block_sums[s, b] = np.sum(P * P)
    p2_mean = np.sum(block_sums, axis=1) / n_traj
    steps = np.arange(1, n_steps + 1, dtype=float)
    half = n_steps // 2
    return ols_slope(steps[half:], p2_mean[half:])
