"""Time evolution of the doubly-kicked rotor.

One double-kick period n (spanning [(n-1)T, nT)) applies, in time order:

    kick (series A, at t = (n-1)T)
    free drift over lambda(n)*T
    kick (series B, at t = (n-1+lambda(n))*T)
    free drift over (1-lambda(n))*T

with lambda(n) = lambda0 + n*(r-1), so a series-B kick lags the series-A kick
opening its period by lambda(n)*T.  At r = 1 the system is strictly periodic;
away from r = 1 the phase drifts by (r-1) per period and the evolution is the
product of the instantaneous one-period operators.

Free drift over a fraction f of the period multiplies momentum amplitudes by
exp(-i*kbar*m^2*f/2); a delta kick multiplies angle amplitudes by
exp(-i*(K/kbar)*cos(theta)).  A finite-duration kick is a rectangular pulse of
length pulse_frac*T carrying the same total impulse, integrated by symmetric
(Strang) split-operator sub-steps.

Two evolution paths are provided.  `evolve_product` applies the drifting
one-period operator directly and refuses when lambda(n) leaves (0,1)
(wraparound would silently reorder kicks).  `evolve_schedule` builds the two
kick series as explicit timed events, sorts them, and alternates free segments
with kicks; it handles any r.  When no wraparound occurs the two paths execute
the identical floating-point operation sequence, so their results coincide
exactly, not merely to rounding.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .core import MOMENTUM, SimParams, WaveFunction, expectation_p2
from .errors import BasisError, TruncationError, WraparoundError

log = logging.getLogger(__name__)

# Kicks closer than this fraction of T are merged into one doubled kick.
COINCIDENCE_TOL = 1e-12

# Fraction of probability allowed in the outer 10% of the lattice.
EDGE_PROB_LIMIT = 1e-8


# ---------------------------------------------------------------------------
# raw engine: arrays in the momentum basis, axis 0 indexed by m = i - M
# ---------------------------------------------------------------------------


def _m2_grid(M: int) -> np.ndarray:
    m = np.arange(-M, M, dtype=float)
    return m * m


def _free_phase(kbar: float, m2: np.ndarray, f: float) -> np.ndarray:
    return np.exp((-0.5j * kbar * f) * m2)


def _kick_phase(params: SimParams, scale: float = 1.0) -> np.ndarray:
    theta = params.theta_grid()
    return np.exp((-1j * scale * params.K / params.kbar) * np.cos(theta))


def _col(phase: np.ndarray, ndim: int) -> np.ndarray:
    # broadcast a per-m phase over extra state columns
    return phase if ndim == 1 else phase[:, None]


def _apply_free(a: np.ndarray, kbar: float, m2: np.ndarray, f: float) -> np.ndarray:
    if f == 0.0:
        return a
    return a * _col(_free_phase(kbar, m2, f), a.ndim)


def _apply_delta_kick(a: np.ndarray, kick: np.ndarray) -> np.ndarray:
    pos = np.fft.ifft(np.fft.ifftshift(a, axes=0), axis=0)
    pos *= _col(kick, a.ndim)
    return np.fft.fftshift(np.fft.fft(pos, axis=0), axes=0)


def _apply_pulse(
    a: np.ndarray,
    params: SimParams,
    m2: np.ndarray,
    scale: float,
    pulse_frac: float,
    n_sub: int,
) -> np.ndarray:
    """Rectangular pulse of duration pulse_frac*T with total impulse scale*K."""
    dt = pulse_frac / n_sub
    sub_kick = _kick_phase(params, scale / n_sub)
    a = _apply_free(a, params.kbar, m2, dt / 2.0)
    for j in range(n_sub):
        a = _apply_delta_kick(a, sub_kick)
        if j < n_sub - 1:
            a = _apply_free(a, params.kbar, m2, dt)
    return _apply_free(a, params.kbar, m2, dt / 2.0)


def _apply_kick(
    a: np.ndarray, params: SimParams, m2: np.ndarray, kick: np.ndarray, scale: float = 1.0
) -> np.ndarray:
    """One kick event: delta kick, or Strang pulse when pulse_frac > 0."""
    if params.pulse_frac == 0.0:
        if scale == 1.0:
            return _apply_delta_kick(a, kick)
        return _apply_delta_kick(a, _kick_phase(params, scale))
    return _apply_pulse(a, params, m2, scale, params.pulse_frac, params.n_sub)


def _one_period_raw(
    a: np.ndarray, params: SimParams, lam: float, m2: np.ndarray, kick: np.ndarray
) -> np.ndarray:
    # free times shrink by pulse_frac because the pulse itself consumes time
    pf = params.pulse_frac
    if pf > 0.0 and (lam - pf <= 0.0 or (1.0 - lam) - pf <= 0.0):
        raise ValueError(
            f"pulse_frac={pf} does not fit in the kick gaps at lambda={lam}"
        )
    a = _apply_kick(a, params, m2, kick)
    a = _apply_free(a, params.kbar, m2, lam - pf if pf > 0.0 else lam)
    a = _apply_kick(a, params, m2, kick)
    a = _apply_free(a, params.kbar, m2, (1.0 - lam) - pf if pf > 0.0 else 1.0 - lam)
    return a


def _edge_probability(a: np.ndarray, M: int) -> float:
    # outer 10% of the lattice on each side
    k = max(1, int(math.ceil(0.1 * M)))
    p = np.abs(a) ** 2
    return float(np.sum(p[:k]) + np.sum(p[-k:]))


# ---------------------------------------------------------------------------
# public single-step operations
# ---------------------------------------------------------------------------


def free_segment(psi: WaveFunction, f: float) -> WaveFunction:
    """Free evolution over a fraction f of the period.

    Multiplies amps_m by exp(-i*kbar*m^2*f/2); requires the momentum basis.
    """
    if psi.basis != MOMENTUM:
        raise BasisError("free_segment expects a momentum-basis state")
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"free fraction must be in [0,1], got {f}")
    m2 = _m2_grid(psi.M)
    return replace(psi, amps=_apply_free(psi.amps, psi.kbar, m2, f))


def kick(psi: WaveFunction, params: SimParams, scale: float = 1.0) -> WaveFunction:
    """Delta kick: angle amplitudes gain exp(-i*scale*(K/kbar)*cos(theta)).

    Accepts either basis (transforms internally) and returns a momentum-basis
    state.  `scale` multiplies the kick strength; merged coincident kicks use
    scale=2, and scale=-1 realizes the inverse kick.
    """
    _check_params_state(psi, params)
    a = psi.amps
    if psi.basis == MOMENTUM:
        pos = np.fft.ifft(np.fft.ifftshift(a))
    else:
        pos = a / math.sqrt(a.size)
    pos = pos * _kick_phase(params, scale)
    mom = np.fft.fftshift(np.fft.fft(pos))
    return replace(psi, amps=mom, basis=MOMENTUM)


def finite_pulse_kick(
    psi: WaveFunction,
    params: SimParams,
    pulse_frac: float | None = None,
    n_sub: int | None = None,
) -> WaveFunction:
    """Rectangular finite-duration kick with total impulse K.

    Converges to the delta kick() as pulse_frac -> 0; the Strang sub-stepping
    error falls off as n_sub^-2.
    """
    if psi.basis != MOMENTUM:
        raise BasisError("finite_pulse_kick expects a momentum-basis state")
    _check_params_state(psi, params)
    pf = params.pulse_frac if pulse_frac is None else pulse_frac
    ns = params.n_sub if n_sub is None else n_sub
    if not 0.0 < pf < 0.5:
        raise ValueError(f"pulse_frac must be in (0, 0.5), got {pf}")
    if ns < 1:
        raise ValueError(f"n_sub must be >= 1, got {ns}")
    m2 = _m2_grid(psi.M)
    return replace(psi, amps=_apply_pulse(psi.amps, params, m2, 1.0, pf, ns))


def one_period(psi: WaveFunction, params: SimParams, lam: float) -> WaveFunction:
    """One double-kick period: kick, free(lam), kick, free(1-lam)."""
    if psi.basis != MOMENTUM:
        raise BasisError("one_period expects a momentum-basis state")
    _check_params_state(psi, params)
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must be in (0,1), got {lam}")
    m2 = _m2_grid(psi.M)
    kick_ph = _kick_phase(params)
    return replace(psi, amps=_one_period_raw(psi.amps, params, lam, m2, kick_ph))


def _check_params_state(psi: WaveFunction, params: SimParams) -> None:
    if psi.M != params.M:
        raise ValueError(f"state has M={psi.M} but params M={params.M}")
    if psi.kbar != params.kbar:
        raise ValueError(f"state kbar={psi.kbar} != params kbar={params.kbar}")


# ---------------------------------------------------------------------------
# whole-run evolution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvolutionRecord:
    """<p^2> sampled at integer times plus the final state.

    p2_series[n-1] is <p^2> at time nT (after the n-th double kick);
    lambda_series[n-1] is lambda(n) mod 1.  `valid` goes false when the
    truncation guard tripped (probability reached the lattice edge).
    """

    p2_series: np.ndarray
    final_state: WaveFunction
    lambda_series: np.ndarray
    valid: bool = True
    max_edge_prob: float = 0.0


def lambda_of_n(params: SimParams, n: np.ndarray | int) -> np.ndarray | float:
    """Inter-sequence phase at period n: lambda0 + n*(r-1), not wrapped."""
    return params.lambda0 + np.asarray(n, dtype=float) * (params.r - 1.0)


def evolve_product(psi0: WaveFunction, params: SimParams) -> EvolutionRecord:
    """Fast path: apply the drifting one-period operator n_kicks times.

    Requires lambda(n) in (0,1) for every period (no wraparound); otherwise
    raises WraparoundError directing the caller to evolve_schedule.
    """
    if psi0.basis != MOMENTUM:
        raise BasisError("evolve_product expects a momentum-basis state")
    _check_params_state(psi0, params)
    n = np.arange(1, params.n_kicks + 1)
    lams = params.lambda0 + n * (params.r - 1.0)
    if np.any(lams <= 0.0) or np.any(lams >= 1.0):
        bad = int(n[(lams <= 0.0) | (lams >= 1.0)][0])
        raise WraparoundError(
            f"lambda(n) leaves (0,1) at n={bad}; use evolve_schedule"
        )
    m2 = _m2_grid(params.M)
    kick_ph = _kick_phase(params)
    a = psi0.amps.copy()
    p2 = np.empty(params.n_kicks)
    edge = 0.0
    for i in range(params.n_kicks):
        a = _one_period_raw(a, params, float(lams[i]), m2, kick_ph)
        p2[i] = _p2_of(a, params)
        edge = max(edge, _edge_probability(a, params.M))
    return _make_record(a, params, p2, lams, edge)


def _p2_of(a: np.ndarray, params: SimParams) -> float:
    m2 = _m2_grid(params.M)
    return float(params.kbar**2 * np.sum(m2 * (np.abs(a) ** 2)))


def _make_record(a, params, p2, lams, edge) -> EvolutionRecord:
    final = WaveFunction(amps=a, basis=MOMENTUM, kbar=params.kbar)
    valid = edge < EDGE_PROB_LIMIT
    if not valid:
        log.warning(
            "truncation guard tripped: edge probability %.3e >= %.1e",
            edge,
            EDGE_PROB_LIMIT,
        )
    return EvolutionRecord(
        p2_series=p2,
        final_state=final,
        lambda_series=np.mod(np.asarray(lams, dtype=float), 1.0),
        valid=valid,
        max_edge_prob=edge,
    )


# ---------------------------------------------------------------------------
# general schedule path
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KickEvent:
    """A kick at absolute time window + frac (units of T).

    Splitting the time into an integer window and an exact fractional part
    keeps inter-kick gaps free of cancellation error, which is what makes the
    schedule path reproduce the product path exactly.
    """

    window: int
    frac: float
    series: str

    @property
    def time(self) -> float:
        return self.window + self.frac


@dataclass(frozen=True)
class KickSchedule:
    """Time-ordered kick events of both series over `horizon` periods."""

    events: tuple[KickEvent, ...]
    horizon: int

    def times(self) -> np.ndarray:
        return np.array([e.time for e in self.events])


def build_schedule(params: SimParams) -> KickSchedule:
    """Enumerate both kick series over n_kicks periods.

    Series A fires at integer times 0..n_kicks-1.  Series-B kick n lags the
    series-A kick opening period n by lambda(n)*T, i.e. fires at absolute time
    (n-1) + lambda0 + n*(r-1); events outside [0, horizon) are dropped.
    """
    horizon = params.n_kicks
    events = [KickEvent(window=n, frac=0.0, series="A") for n in range(horizon)]
    n = 1
    while True:
        lam_n = params.lambda0 + n * (params.r - 1.0)
        t = (n - 1) + lam_n
        if t >= horizon:
            break
        if t >= 0.0:
            w = int(math.floor(t))
            # frac = t - floor(t) is exact in IEEE for t >= 0, but compute it
            # from lam_n so the no-wraparound case reuses the same float
            k = int(math.floor(lam_n))
            window = (n - 1) + k
            frac = lam_n - k
            if frac >= 1.0:  # floor edge from rounding
                window += 1
                frac -= 1.0
            events.append(KickEvent(window=window, frac=frac, series="B"))
        n += 1
        if n > 100 * horizon + 1000:  # safety for tiny r
            break
    events.sort(key=lambda e: (e.window, e.frac, e.series))
    return KickSchedule(events=tuple(events), horizon=horizon)


def evolve_schedule(
    psi0: WaveFunction, sched: KickSchedule, params: SimParams
) -> EvolutionRecord:
    """General path: sorted kick events with free segments in between.

    Handles any r, including lambda wraparound and kick reordering.  Kicks
    closer than 1e-12*T merge into a single kick of doubled strength (logged).
    <p^2> is sampled at each integer time 1..horizon.
    """
    if psi0.basis != MOMENTUM:
        raise BasisError("evolve_schedule expects a momentum-basis state")
    _check_params_state(psi0, params)
    m2 = _m2_grid(params.M)
    kick_ph = _kick_phase(params)
    pf = params.pulse_frac

    # group events by window; merge coincident kicks within a window
    by_window: dict[int, list[list]] = {}
    for ev in sched.events:
        group = by_window.setdefault(ev.window, [])
        if group and abs(group[-1][0] - ev.frac) < COINCIDENCE_TOL:
            group[-1][1] += 1.0
            log.warning(
                "coincident kicks at t=%.15g merged into doubled strength",
                ev.window + ev.frac,
            )
        else:
            group.append([ev.frac, 1.0])

    a = psi0.amps.copy()
    p2 = np.empty(sched.horizon)
    edge = 0.0
    for w in range(sched.horizon):
        pos = 0.0  # nominal position within the window, units of T
        kicked = False
        for frac, strength in by_window.get(w, ()):
            gap = frac - pos
            if pf > 0.0 and kicked:
                gap = gap - pf  # time consumed by the previous pulse
            if gap < 0.0:
                raise ValueError(
                    f"overlapping finite-duration kicks near t={w + frac}"
                )
            if gap > 0.0:
                a = _apply_free(a, params.kbar, m2, gap)
            a = _apply_kick(a, params, m2, kick_ph, scale=strength)
            pos = frac
            kicked = True
        tail = 1.0 - pos
        if pf > 0.0 and kicked:
            tail = tail - pf
            if tail < 0.0:
                raise ValueError(f"pulse extends past the end of window {w}")
        if tail > 0.0:
            a = _apply_free(a, params.kbar, m2, tail)
        p2[w] = _p2_of(a, params)
        edge = max(edge, _edge_probability(a, params.M))

    n = np.arange(1, sched.horizon + 1)
    lams = params.lambda0 + n * (params.r - 1.0)
    return _make_record(a, params, p2, lams, edge)


def evolve(psi0: WaveFunction, params: SimParams) -> EvolutionRecord:
    """Evolve by the fast product path, falling back to the schedule path."""
    try:
        return evolve_product(psi0, params)
    except WraparoundError:
        return evolve_schedule(psi0, build_schedule(params), params)
