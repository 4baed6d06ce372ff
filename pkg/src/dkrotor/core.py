"""Momentum-lattice state of the kicked rotor and elementary observables.

Conventions (dimensionless, period scaled to 1):

* the basis is integer momentum m on a lattice of 2M sites, m in [-M, M-1],
  with array index i holding m = i - M;
* physical momentum is p = kbar * m, where kbar = hbar*T in scaled units is
  the effective Planck constant;
* the conjugate angle grid is theta_j = 2*pi*j / (2M), j = 0..2M-1;
* the momentum <-> position change of basis is the unitary DFT
  psi(theta_j) = (2M)^(-1/2) * sum_m psi_m exp(i m theta_j).

All state types are immutable values; operations are pure functions that
return new states, so everything is safe to share across processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import BasisError

# 8 * omega_r * T for cesium (omega_r/2pi = 2.0663 kHz) at T = 27.8 us.
DEFAULT_KBAR = 2.89

# Rectangular 800 ns pulse as a fraction of the 27.8 us period.
DEFAULT_PULSE_FRAC = 0.0288

MOMENTUM = "momentum"
POSITION = "position"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SimParams:
    """All physical and numerical knobs of a run.

    Attributes
    ----------
    K : dimensionless kick strength (each series kicks with strength K).
    kbar : effective Planck constant, hbar*T in scaled units.
    r : ratio of the two kick periods (second series period is r*T).
    lambda0 : initial phase between the kick sequences, in [0, 1).
    n_kicks : number of double-kick periods to evolve.
    M : half basis size; the lattice spans m in [-M, M-1], M a power of two.
    pulse_frac : kick duration as a fraction of T (0 means delta kick).
    n_sub : split-operator sub-steps per finite-duration kick.
    seed : seed for all derived randomness (ensemble draws, fits).
    """

    K: float = 10.0
    kbar: float = DEFAULT_KBAR
    r: float = 1.0
    lambda0: float = 0.25
    n_kicks: int = 200
    M: int = 512
    pulse_frac: float = 0.0
    n_sub: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.K < 0:
            raise ValueError(f"K must be >= 0, got {self.K}")
        if self.kbar <= 0:
            raise ValueError(f"kbar must be > 0, got {self.kbar}")
        if self.r <= 0:
            raise ValueError(f"r must be > 0, got {self.r}")
        if not 0 <= self.lambda0 < 1:
            raise ValueError(f"lambda0 must be in [0,1), got {self.lambda0}")
        if self.M < 16 or (self.M & (self.M - 1)) != 0:
            raise ValueError(f"M must be a power of two >= 16, got {self.M}")
        if not 0 <= self.pulse_frac < 0.5:
            raise ValueError(f"pulse_frac must be in [0,0.5), got {self.pulse_frac}")
        if self.n_sub < 1:
            raise ValueError(f"n_sub must be >= 1, got {self.n_sub}")
        if self.n_kicks < 1:
            raise ValueError(f"n_kicks must be >= 1, got {self.n_kicks}")

    @property
    def n_sites(self) -> int:
        return 2 * self.M

    def m_grid(self) -> np.ndarray:
        return np.arange(-self.M, self.M)

    def theta_grid(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(2 * self.M) / (2 * self.M)


@dataclass(frozen=True)
class WaveFunction:
    """Complex amplitudes on the 2M-site lattice, unit norm.

    `basis` tags whether `amps` lives on the momentum lattice or on the
    conjugate angle grid; `kbar` rides along so momentum observables carry
    their physical scale.
    """

    amps: np.ndarray
    basis: str = MOMENTUM
    kbar: float = DEFAULT_KBAR

    def __post_init__(self):
        if self.basis not in (MOMENTUM, POSITION):
            raise ValueError(f"unknown basis tag {self.basis!r}")
        a = np.asarray(self.amps, dtype=complex)
        if a.ndim != 1 or a.size % 2 != 0:
            raise ValueError("amps must be a 1-d array of even length 2M")
        object.__setattr__(self, "amps", _frozen(a))

    @property
    def M(self) -> int:
        return self.amps.size // 2

    def m_grid(self) -> np.ndarray:
        return np.arange(-self.M, self.M)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amps) ** 2)))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2


@dataclass(frozen=True)
class MomentumDistribution:
    """Probabilities on the momentum lattice, same indexing as WaveFunction."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size % 2 != 0:
            raise ValueError("probs must be a 1-d array of even length 2M")
        if np.any(p < 0):
            raise ValueError("probabilities must be non-negative")
        object.__setattr__(self, "probs", _frozen(p))

    @property
    def M(self) -> int:
        return self.probs.size // 2

    def m_grid(self) -> np.ndarray:
        return np.arange(-self.M, self.M)


def initial_state(
    M: int,
    kind: str = "delta_p0",
    width_sites: float | None = None,
    kbar: float = DEFAULT_KBAR,
) -> WaveFunction:
    """Build the initial state, localized in momentum around m = 0.

    Parameters
    ----------
    M : half basis size.
    kind : "delta_p0" puts all amplitude at m = 0; "narrow_gaussian" builds a
        real Gaussian amplitude profile whose probability has standard
        deviation `width_sites` lattice sites, renormalized.
    width_sites : width for the Gaussian kind; must be < M/4 so the state is
        narrow compared to the basis.
    """
    amps = np.zeros(2 * M, dtype=complex)
    if kind == "delta_p0":
        amps[M] = 1.0
    elif kind == "narrow_gaussian":
        if width_sites is None:
            raise ValueError("narrow_gaussian requires width_sites")
        if width_sites <= 0:
            raise ValueError("width_sites must be positive")
        if width_sites >= M / 4:
            raise ValueError(
                f"width_sites={width_sites} too wide for M={M}; must be < M/4"
            )
        m = np.arange(-M, M)
        amps = np.exp(-(m.astype(float) ** 2) / (4.0 * width_sites**2)).astype(complex)
        amps /= np.sqrt(np.sum(np.abs(amps) ** 2))
    else:
        raise ValueError(f"unknown initial state kind {kind!r}")
    return WaveFunction(amps=amps, basis=MOMENTUM, kbar=kbar)


def to_position(psi: WaveFunction) -> WaveFunction:
    """Unitary DFT from the momentum lattice to the angle grid."""
    if psi.basis != MOMENTUM:
        raise BasisError("to_position expects a momentum-basis state")
    n = psi.amps.size
    pos = np.fft.ifft(np.fft.ifftshift(psi.amps)) * math.sqrt(n)
    return replace(psi, amps=pos, basis=POSITION)


def to_momentum(psi: WaveFunction) -> WaveFunction:
    """Unitary DFT from the angle grid back to the momentum lattice."""
    if psi.basis != POSITION:
        raise BasisError("to_momentum expects a position-basis state")
    n = psi.amps.size
    mom = np.fft.fftshift(np.fft.fft(psi.amps)) / math.sqrt(n)
    return replace(psi, amps=mom, basis=MOMENTUM)


def expectation_p2(psi: WaveFunction) -> float:
    """<p^2> = kbar^2 * sum_m m^2 |psi_m|^2 (dimensionless scaled units)."""
    if psi.basis != MOMENTUM:
        raise BasisError("expectation_p2 expects a momentum-basis state")
    m = psi.m_grid().astype(float)
    return float(psi.kbar**2 * np.sum(m * m * psi.probabilities()))


def momentum_distribution(psi: WaveFunction) -> MomentumDistribution:
    if psi.basis != MOMENTUM:
        raise BasisError("momentum_distribution expects a momentum-basis state")
    return MomentumDistribution(probs=psi.probabilities())


def p0_population(dist: MomentumDistribution, half_window_sites: int = 0) -> float:
    """Population of the zero-momentum class: sum over |m| <= half_window.

    The window models the finite width of the measured velocity class;
    half_window_sites = 0 selects the single m = 0 site.
    """
    if half_window_sites < 0:
        raise ValueError("half_window_sites must be >= 0")
    if half_window_sites >= dist.M:
        raise ValueError(
            f"window {half_window_sites} must be smaller than M={dist.M}"
        )
    M = dist.M
    lo = M - half_window_sites
    hi = M + half_window_sites + 1
    return float(np.sum(dist.probs[lo:hi]))
