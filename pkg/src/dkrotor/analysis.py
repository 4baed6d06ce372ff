"""Physics extraction: localization fits, diffusion, resonance scans,
sub-Fourier widths, cusp tests, and the diffusive lineshape ansatz.

The lineshape model for the kinetic energy after n double-kick periods is

    p2(r) = p2_DL + D_cl * |r-1| / (|r-1| + dlam/t_ell) * n

and the zero-momentum population is fitted through P0 proportional to
p2^(-1/2) (measuring P0 is equivalent to measuring the width of the
distribution).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace as dc_replace

import numpy as np
import scipy.optimize

from .core import (
    MomentumDistribution,
    SimParams,
    WaveFunction,
    initial_state,
    momentum_distribution,
    p0_population,
)
from .errors import FitConvergenceError, TruncationError, ValidityError
from .propagate import build_schedule, evolve_schedule
from .rng import uniform_stream
from .runner import parallel_map


def ols_slope(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Ordinary least squares slope and its standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    xm = x - x.mean()
    sxx = float(np.sum(xm * xm))
    if sxx == 0.0:
        raise ValueError("degenerate abscissa for slope fit")
    slope = float(np.sum(xm * y) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    dof = max(n - 2, 1)
    stderr = float(np.sqrt(np.sum(resid * resid) / dof / sxx))
    return slope, stderr


# ---------------------------------------------------------------------------
# localization and diffusion fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LocalizationFit:
    """Exponential localization parameters of a frozen run.

    ell is the decay length of P(m) ~ exp(-|m|/ell) in lattice sites; t_ell
    the break time in periods; p2_sat the <p^2> plateau.
    """

    ell: float
    t_ell: float
    p2_sat: float
    fit_residual: float


@dataclass(frozen=True)
class DiffusionFit:
    """d<p^2>/dn over a late-time window (dimensionless per period)."""

    D: float
    window: tuple[int, int]
    stderr: float


def fit_localization(
    dist: MomentumDistribution,
    p2_series: np.ndarray,
    late_drift_tol: float = 0.1,
    floor_factor: float = 100.0,
) -> LocalizationFit:
    """Fit the exponential momentum profile and break time of a frozen run.

    The decay length comes from least squares of log P(m) against |m| over
    the sites where P exceeds `floor_factor` times the numerical floor.
    Raises ValidityError when the late-time <p^2> still drifts by more than
    `late_drift_tol` of the plateau over the second half (run not localized).
    """
    p2 = np.asarray(p2_series, dtype=float)
    if p2.size < 8:
        raise ValueError("p2_series too short to assess localization")
    n_last = max(2, p2.size // 4)
    p2_sat = float(np.mean(p2[-n_last:]))
    half = p2.size // 2
    slope, _ = ols_slope(np.arange(half, p2.size, dtype=float), p2[half:])
    drift = abs(slope) * (p2.size - half)
    if p2_sat <= 0.0 or drift > late_drift_tol * p2_sat:
        raise ValidityError(
            f"run not localized: late drift {drift:.3g} exceeds "
            f"{late_drift_tol:.0%} of plateau {p2_sat:.3g}"
        )

    probs = dist.probs
    m = np.abs(dist.m_grid().astype(float))
    positive = probs > 0.0
    if not np.any(positive):
        raise ValidityError("empty momentum distribution")
    floor = probs[positive].min()
    sel = probs > floor_factor * floor
    if np.count_nonzero(sel) < 5:
        sel = positive  # floor cut too aggressive on clean synthetic input
    logp = np.log(probs[sel])
    A = np.column_stack([np.ones(np.count_nonzero(sel)), m[sel]])
    coef, *_ = np.linalg.lstsq(A, logp, rcond=None)
    if coef[1] >= 0.0:
        raise ValidityError("momentum profile is not exponentially decaying")
    ell = -1.0 / float(coef[1])
    resid = logp - A @ coef
    fit_residual = float(np.sqrt(np.mean(resid * resid)))

    level = (1.0 - math.exp(-1.0)) * p2_sat
    above = np.flatnonzero(p2 >= level)
    t_ell = float(above[0] + 1) if above.size else float(p2.size)
    return LocalizationFit(ell=ell, t_ell=t_ell, p2_sat=p2_sat, fit_residual=fit_residual)


def fit_diffusion(p2_series: np.ndarray, window: tuple[int, int]) -> DiffusionFit:
    """OLS slope of <p^2> versus period number over [n_min, n_max].

    Periods are 1-based: p2_series[n-1] is the sample at time nT.  Windows
    shorter than 10 points are refused.
    """
    p2 = np.asarray(p2_series, dtype=float)
    n_min, n_max = int(window[0]), int(window[1])
    if n_min < 1 or n_max > p2.size or n_min >= n_max:
        raise ValueError(f"window {window} outside series of length {p2.size}")
    if n_max - n_min + 1 < 10:
        raise ValueError(f"window {window} shorter than 10 points")
    n = np.arange(n_min, n_max + 1, dtype=float)
    slope, stderr = ols_slope(n, p2[n_min - 1 : n_max])
    return DiffusionFit(D=slope, window=(n_min, n_max), stderr=stderr)


# ---------------------------------------------------------------------------
# resonance scan over the period ratio
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResonanceScan:
    """lambda0-averaged observables over an r grid.

    p0/p0_err are the zero-momentum population after n_kicks periods;
    p2_series holds the ensemble-averaged <p^2>(n) per r (row-aligned with
    r_grid); D_of_r the late-window diffusion slopes.  fwhm_r and
    sub_fourier_factor are nan when the scan was built without a contained
    peak (require_peak=False).
    """

    r_grid: np.ndarray
    p0: np.ndarray
    p0_err: np.ndarray
    p2_final: np.ndarray
    D_of_r: np.ndarray
    D_err: np.ndarray
    p2_series: np.ndarray
    fwhm_r: float
    sub_fourier_factor: float
    n_kicks: int
    n_ensemble: int
    window: tuple[int, int]
    t_ell_est: float
    p0_window: int
    seed: int


def _scan_task(payload):
    params, p0_window, psi0_kind, psi0_width = payload
    psi0 = initial_state(params.M, psi0_kind, psi0_width, kbar=params.kbar)
    rec = evolve_schedule(psi0, build_schedule(params), params)
    p0 = p0_population(momentum_distribution(rec.final_state), p0_window)
    return rec.p2_series, p0, rec.valid, rec.max_edge_prob


def resonance_scan(
    params: SimParams,
    r_grid: np.ndarray,
    n_ensemble: int = 8,
    p0_window: int = 0,
    window: tuple[int, int] | None = None,
    n_workers: int = 1,
    require_peak: bool = True,
    psi0_kind: str = "delta_p0",
    psi0_width: float | None = None,
) -> ResonanceScan:
    """Average P0 and <p^2> over lambda0 draws for each r on the grid.

    The same `n_ensemble` uniform lambda0 draws (keyed by params.seed) are
    used at every r, which keeps the scan smooth and symmetric.  D(r) is the
    OLS slope of the averaged <p^2> over `window` (default: from
    max(2*t_ell, 20) to the end, with t_ell estimated at the grid point
    closest to r=1).  The FWHM of the P0 peak is measured by linear
    interpolation above a wings baseline; the Fourier reference is
    Delta r = 1/n_kicks, and sub_fourier_factor = (1/n_kicks)/fwhm.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    if r_grid.ndim != 1 or r_grid.size < 2:
        raise ValueError("r_grid must hold at least two points")
    if n_ensemble < 1:
        raise ValueError("n_ensemble must be >= 1")
    lam0s = uniform_stream(params.seed, np.arange(n_ensemble))
    payloads = [
        (dc_replace(params, r=float(r), lambda0=float(l0)), p0_window, psi0_kind, psi0_width)
        for r in r_grid
        for l0 in lam0s
    ]
    results = parallel_map(_scan_task, payloads, n_workers=n_workers)

    N = params.n_kicks
    n_r = r_grid.size
    p2_runs = np.array([res[0] for res in results]).reshape(n_r, n_ensemble, N)
    p0_runs = np.array([res[1] for res in results]).reshape(n_r, n_ensemble)
    valid = np.array([res[2] for res in results]).reshape(n_r, n_ensemble)
    if not np.all(valid):
        bad_r = r_grid[np.any(~valid, axis=1)]
        raise TruncationError(
            f"truncation guard tripped at r = {bad_r.tolist()}; increase M"
        )

    p2_series = p2_runs.mean(axis=1)
    p0_mean = p0_runs.mean(axis=1)
    if n_ensemble > 1:
        p0_err = p0_runs.std(axis=1, ddof=1) / math.sqrt(n_ensemble)
    else:
        p0_err = np.zeros(n_r)
    p2_final = p2_series[:, -1]

    i_ref = int(np.argmin(np.abs(r_grid - 1.0)))
    t_ell_est = _break_time(p2_series[i_ref])
    if window is None:
        n_min = min(max(int(2 * t_ell_est), 20), max(N - 10, 1))
        window = (n_min, N)
    D = np.empty(n_r)
    D_err = np.empty(n_r)
    for i in range(n_r):
        fit = fit_diffusion(p2_series[i], window)
        D[i] = fit.D
        D_err[i] = fit.stderr

    fwhm = math.nan
    sub_fourier = math.nan
    try:
        fwhm, _ = peak_fwhm(r_grid, p0_mean)
        sub_fourier = (1.0 / N) / fwhm
    except ValidityError:
        if require_peak:
            raise
    return ResonanceScan(
        r_grid=r_grid,
        p0=p0_mean,
        p0_err=p0_err,
        p2_final=p2_final,
        D_of_r=D,
        D_err=D_err,
        p2_series=p2_series,
        fwhm_r=fwhm,
        sub_fourier_factor=sub_fourier,
        n_kicks=N,
        n_ensemble=n_ensemble,
        window=window,
        t_ell_est=t_ell_est,
        p0_window=p0_window,
        seed=params.seed,
    )


def _break_time(p2: np.ndarray) -> float:
    n_last = max(2, p2.size // 4)
    plateau = float(np.mean(p2[-n_last:]))
    level = (1.0 - math.exp(-1.0)) * plateau
    above = np.flatnonzero(p2 >= level)
    return float(above[0] + 1) if above.size else float(p2.size)


def peak_fwhm(x: np.ndarray, y: np.ndarray) -> tuple[float, dict]:
    """Full width at half maximum of a peak on a nonzero baseline.

    The baseline is the mean of the outer 10% of points (the wings, split
    between both ends); crossings of the half level are located by linear
    interpolation.  Raises ValidityError when either crossing falls outside
    the grid (peak not contained).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size or x.size < 5:
        raise ValueError("need at least 5 aligned points")
    k = max(1, int(round(0.05 * x.size)))
    baseline = float(np.mean(np.concatenate([y[:k], y[-k:]])))
    ipk = int(np.argmax(y))
    level = baseline + 0.5 * (y[ipk] - baseline)
    if ipk == 0 or ipk == x.size - 1:
        raise ValidityError("peak not contained in grid (maximum at an edge)")

    def cross(side: int) -> float:
        i = ipk
        while 0 <= i + side < x.size:
            j = i + side
            if y[j] < level:
                f = (level - y[i]) / (y[j] - y[i])
                return float(x[i] + f * (x[j] - x[i]))
            i = j
        raise ValidityError("peak not contained in grid (no half crossing)")

    x_left = cross(-1)
    x_right = cross(+1)
    return x_right - x_left, {
        "baseline": baseline,
        "level": level,
        "x_left": x_left,
        "x_right": x_right,
        "peak_index": ipk,
    }


# ---------------------------------------------------------------------------
# cusp test
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CuspReport:
    """Comparison of a*|r-1| against b*(r-1)^2 fits to D(r) near r=1."""

    a: float
    b: float
    linear_residual: float
    quadratic_residual: float
    verdict: str


def cusp_test(scan: ResonanceScan) -> CuspReport:
    """Decide whether D(r) grows linearly or quadratically in |r-1|.

    Fits both one-parameter models through the origin by least squares and
    declares the one with the smaller residual.  Needs at least 7 points.
    """
    q = scan.r_grid - 1.0
    D = scan.D_of_r
    if q.size < 7:
        raise ValueError(f"need at least 7 scan points, got {q.size}")
    aq = np.abs(q)
    a = float(np.sum(D * aq) / np.sum(aq * aq))
    q2 = q * q
    b = float(np.sum(D * q2) / np.sum(q2 * q2))
    res_lin = float(np.sqrt(np.mean((D - a * aq) ** 2)))
    res_quad = float(np.sqrt(np.mean((D - b * q2) ** 2)))
    verdict = "linear" if res_lin <= res_quad else "quadratic"
    return CuspReport(
        a=a,
        b=b,
        linear_residual=res_lin,
        quadratic_residual=res_quad,
        verdict=verdict,
    )


# ---------------------------------------------------------------------------
# lineshape ansatz fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LineshapeFit:
    """Parameters of the diffusive lineshape fitted to P0(r)."""

    p2_dl: float
    d_cl: float
    delta_lambda: float
    residual: float
    scale: float = 1.0


@dataclass(frozen=True)
class SharedLineshapeFit:
    """Joint fit of several scans sharing D_cl (and the P0 scale)."""

    d_cl: float
    delta_lambdas: tuple[float, ...]
    p2_dl: float
    scale: float
    residuals: tuple[float, ...]
    loss: float


def lineshape_p2(
    r: np.ndarray, p2_dl: float, d_cl: float, delta_lam: float, t_ell: float, n_kicks: int
) -> np.ndarray:
    """Kinetic energy after n_kicks periods under the diffusive ansatz."""
    q = np.abs(np.asarray(r, dtype=float) - 1.0)
    return p2_dl + d_cl * q / (q + delta_lam / t_ell) * n_kicks


def fit_lineshape(
    scan: ResonanceScan,
    t_ell: float | None = None,
    n_restarts: int = 8,
    seed: int = 0,
) -> LineshapeFit:
    """Fit P0(r) = p2(r)^(-1/2) with free (p2_DL, D_cl, delta_lambda).

    Derivative-free simplex minimization restarted from `n_restarts`
    jittered initial guesses (log-space parameters keep everything
    positive).  Raises FitConvergenceError with the best partial result when
    no restart converges.
    """
    if scan.r_grid.size < 4:
        raise ValueError(
            f"underdetermined lineshape fit: {scan.r_grid.size} points for 3 parameters"
        )
    t_ell = scan.t_ell_est if t_ell is None else t_ell
    r = scan.r_grid
    p0 = scan.p0

    def loss(logp):
        p2 = lineshape_p2(r, *np.exp(logp), t_ell, scan.n_kicks)
        return float(np.sum((1.0 / np.sqrt(p2) - p0) ** 2))

    p2_dl0 = 1.0 / max(np.max(p0), 1e-12) ** 2
    wing = 1.0 / max(np.min(p0), 1e-12) ** 2
    d_cl0 = max((wing - p2_dl0) / scan.n_kicks, 1e-3)
    guess = np.log([p2_dl0, d_cl0, 0.05])
    best = _restarted_simplex(loss, guess, n_restarts, seed)
    p2_dl, d_cl, dlam = np.exp(best.x)
    return LineshapeFit(
        p2_dl=float(p2_dl),
        d_cl=float(d_cl),
        delta_lambda=float(dlam),
        residual=float(np.sqrt(best.fun / r.size)),
    )


def fit_lineshape_shared(
    scans: list[ResonanceScan],
    p2_dl: float,
    t_ell: float,
    n_restarts: int = 8,
    seed: int = 0,
) -> SharedLineshapeFit:
    """Joint fit of several P0 scans with one D_cl and one profiled scale.

    p2_DL is pinned to the measured saturation value: with a free overall
    scale the triple (p2_DL, D_cl, scale) is exactly degenerate, so only the
    shape parameters are free: shared D_cl plus one delta_lambda per scan.
    The proportionality scale of P0 = scale * p2^(-1/2) is profiled out
    analytically at each step.
    """
    if not scans:
        raise ValueError("no scans supplied")

    def model_cols(logp):
        d_cl = math.exp(logp[0])
        cols = []
        for i, scan in enumerate(scans):
            dlam = math.exp(logp[1 + i])
            p2 = lineshape_p2(scan.r_grid, p2_dl, d_cl, dlam, t_ell, scan.n_kicks)
            cols.append(1.0 / np.sqrt(p2))
        return cols

    p0_all = np.concatenate([s.p0 for s in scans])

    def loss(logp):
        f = np.concatenate(model_cols(logp))
        denom = float(np.sum(f * f))
        scale = float(np.sum(p0_all * f)) / denom if denom > 0 else 0.0
        return float(np.sum((scale * f - p0_all) ** 2))

    d_cl0 = max((1.0 / max(np.min(scans[0].p0), 1e-12) ** 2 - p2_dl), 1.0) / scans[0].n_kicks
    guess = np.log(np.concatenate([[max(d_cl0, 1e-3)], [0.05] * len(scans)]))
    best = _restarted_simplex(loss, guess, n_restarts, seed)
    d_cl = math.exp(best.x[0])
    dlams = tuple(math.exp(v) for v in best.x[1:])
    f_cols = model_cols(best.x)
    f_all = np.concatenate(f_cols)
    scale = float(np.sum(p0_all * f_all) / np.sum(f_all * f_all))
    residuals = []
    for scan, f in zip(scans, f_cols):
        residuals.append(float(np.sqrt(np.mean((scale * f - scan.p0) ** 2))))
    return SharedLineshapeFit(
        d_cl=float(d_cl),
        delta_lambdas=dlams,
        p2_dl=float(p2_dl),
        scale=scale,
        residuals=tuple(residuals),
        loss=float(best.fun),
    )


def _restarted_simplex(loss, guess: np.ndarray, n_restarts: int, seed: int):
    rng = np.random.default_rng(seed)
    best = None
    any_success = False
    for k in range(max(1, n_restarts)):
        x0 = guess if k == 0 else guess + rng.uniform(-0.7, 0.7, size=guess.size)
        res = scipy.optimize.minimize(
            loss,
            x0,
            method="Nelder-Mead",
            options={"maxiter": 4000, "xatol": 1e-10, "fatol": 1e-14},
        )
        any_success = any_success or bool(res.success)
        if best is None or res.fun < best.fun:
            best = res
    if not any_success:
        raise FitConvergenceError(
            f"no simplex restart converged (best loss {best.fun:.3e})",
            partial=np.exp(best.x),
        )
    return best
