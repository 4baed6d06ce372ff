"""Floquet spectrum of the one-period operator and its level dynamics.

The one-period operator U(lambda) of the periodic doubly-kicked rotor is
diagonalized densely (all eigenpairs are needed to follow the level
dynamics).  Eigenphases eps_k live on the branch (-pi, pi]; since
U|phi_k> = exp(-i*eps_k)|phi_k>, eps_k = -arg(eigenvalue).  All gap
computations use circular distance so avoided crossings near +-pi are not
split by the branch cut.

Diagonalization goes through the complex Schur form: for a unitary (normal)
matrix the Schur factor is diagonal to machine precision and the Schur basis
is orthonormal by construction, which keeps near-degenerate pairs orthogonal.

A sweep over a lambda grid matches states between neighboring grid points by
maximal eigenvector overlap, producing continuous tracks whose minima of the
circular eigenphase gap are the avoided crossings.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .core import MOMENTUM, SimParams, WaveFunction
from .errors import TrackingError, ValidityError
from .propagate import _kick_phase, _m2_grid, _one_period_raw
from .runner import parallel_map

log = logging.getLogger(__name__)

# Matching threshold and tie tolerance for adiabatic state correspondence.
OVERLAP_THRESHOLD = 0.5
TIE_TOLERANCE = 0.05

# Gaps below this are symmetry-forced true crossings, not ACs.
TRUE_CROSSING_FLOOR = 1e-10

# Contiguous lambda points handed to one worker during a parallel sweep;
# fixed (not derived from the worker count) so results do not depend on it.
SWEEP_CHUNK = 25


# ---------------------------------------------------------------------------
# spectrum at a single lambda
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FloquetSpectrum:
    """Eigen-decomposition of U(lambda) with initial-state weights.

    eigenphases are sorted ascending in (-pi, pi]; eigenvectors holds the
    matching states as columns; centers are the weighted-median momenta of
    |phi_k|^2 in lattice sites; weights are |<psi0|phi_k>|^2 once
    floquet_weights has run.
    """

    eigenphases: np.ndarray
    eigenvectors: np.ndarray
    centers: np.ndarray
    lam: float
    kbar: float
    weights: np.ndarray | None = None

    @property
    def n_states(self) -> int:
        return self.eigenphases.size


def build_U_matrix(params: SimParams, lam: float) -> np.ndarray:
    """One-period operator as a dense 2M x 2M unitary matrix.

    Column j is one_period applied to the basis state m = j - M; the same
    engine as the propagator is used (same ordering, same finite-pulse
    handling), so matrix-vector products reproduce one_period exactly.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must be in (0,1), got {lam}")
    n = params.n_sites
    m2 = _m2_grid(params.M)
    kick_ph = _kick_phase(params)
    U = np.eye(n, dtype=complex)
    return _one_period_raw(U, params, lam, m2, kick_ph)


def principal_phase(phi: np.ndarray) -> np.ndarray:
    """Map phases onto the branch (-pi, pi]."""
    out = -(np.mod(-np.asarray(phi) + np.pi, 2.0 * np.pi) - np.pi)
    return out


def circular_gap(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Circular distance between eigenphases on (-pi, pi]."""
    d = np.abs(np.mod(a - b + np.pi, 2.0 * np.pi) - np.pi)
    return d


def weighted_median_centers(prob_columns: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Weighted median of each column's distribution over the m grid.

    Robust against the exponential tails of localized states, unlike the
    mean.
    """
    cum = np.cumsum(prob_columns, axis=0)
    cum /= cum[-1]
    idx = np.argmax(cum >= 0.5, axis=0)
    return m[idx].astype(float)


def diagonalize(
    U: np.ndarray, lam: float = math.nan, kbar: float | None = None
) -> FloquetSpectrum:
    """Full eigendecomposition of a unitary one-period matrix.

    Verifies unitarity to 1e-8 (raises with the measured deviation
    otherwise) and that all eigenvalue moduli sit on the unit circle.
    Degenerate pairs come out orthogonal because the Schur basis is used.
    """
    from .core import DEFAULT_KBAR

    U = np.asarray(U, dtype=complex)
    n = U.shape[0]
    dev = float(np.max(np.abs(U.conj().T @ U - np.eye(n))))
    if dev > 1e-8:
        raise ValueError(f"matrix is not unitary: max|U^H U - I| = {dev:.3e}")
    T, Z = scipy.linalg.schur(U, output="complex")
    evals = np.diag(T)
    moduli_dev = float(np.max(np.abs(np.abs(evals) - 1.0)))
    if moduli_dev > 1e-8:
        raise ValueError(
            f"eigenvalues off the unit circle by {moduli_dev:.3e}"
        )
    eps = principal_phase(-np.angle(evals))
    order = np.argsort(eps, kind="stable")
    eps = eps[order]
    V = Z[:, order]
    M = n // 2
    m = np.arange(-M, M)
    centers = weighted_median_centers(np.abs(V) ** 2, m)
    return FloquetSpectrum(
        eigenphases=eps,
        eigenvectors=V,
        centers=centers,
        lam=lam,
        kbar=DEFAULT_KBAR if kbar is None else kbar,
    )


def spectrum_at(params: SimParams, lam: float) -> FloquetSpectrum:
    """Convenience: build U(lambda) and diagonalize it."""
    return diagonalize(build_U_matrix(params, lam), lam=lam, kbar=params.kbar)


def floquet_weights(spec: FloquetSpectrum, psi0: WaveFunction) -> FloquetSpectrum:
    """Fill in the initial weights |c_k|^2 = |<psi0|phi_k>|^2."""
    if psi0.basis != MOMENTUM:
        raise ValueError("weights require a momentum-basis initial state")
    if psi0.amps.size != spec.eigenvectors.shape[0]:
        raise ValueError(
            f"dimension mismatch: state {psi0.amps.size}, "
            f"spectrum {spec.eigenvectors.shape[0]}"
        )
    c = spec.eigenvectors.conj().T @ psi0.amps
    return replace(spec, weights=np.abs(c) ** 2)


def state_p2(spec: FloquetSpectrum) -> np.ndarray:
    """Per-state <phi_k|p^2|phi_k> in dimensionless scaled units."""
    n = spec.eigenvectors.shape[0]
    m2 = _m2_grid(n // 2)
    return spec.kbar**2 * (m2 @ (np.abs(spec.eigenvectors) ** 2))


def incoherent_p2(spec: FloquetSpectrum, ref: FloquetSpectrum) -> float:
    """Incoherent sum sum_k |c_k|^2 <phi_k(lambda)|p^2|phi_k(lambda)>.

    `ref` carries the weights, evaluated at lambda0; its states are matched
    to the states of `spec` by maximal overlap.  With spec is ref this
    reduces to the plain incoherent sum in the lambda0 eigenbasis.  Raises
    TrackingError when a significantly populated state cannot be followed
    (best overlap below the matching threshold).
    """
    if ref.weights is None:
        raise ValueError("reference spectrum has no weights; run floquet_weights")
    if spec is ref or (spec.lam == ref.lam and spec.eigenvectors is ref.eigenvectors):
        return float(np.sum(ref.weights * state_p2(spec)))
    perm, best = _match_columns(ref.eigenvectors, spec.eigenvectors)
    significant = ref.weights > 1e-4
    lost = significant & (best < OVERLAP_THRESHOLD)
    if np.any(lost):
        k = int(np.flatnonzero(lost)[0])
        raise TrackingError(
            f"adiabatic correspondence lost for state {k} "
            f"(weight {ref.weights[k]:.2e}, overlap {best[k]:.3f}) "
            f"between lambda={ref.lam} and lambda={spec.lam}"
        )
    p2 = state_p2(spec)
    return float(np.sum(ref.weights * p2[perm]))


def incoherent_p2_swept(
    params: SimParams,
    lam0: float,
    lam: float,
    psi0: WaveFunction,
    step: float = 0.005,
) -> float:
    """incoherent_p2 with intermediate spectra bridging lam0 -> lam.

    Keeps consecutive overlaps above the matching threshold when
    |lam - lam0| is too large for a single hop.
    """
    n_hops = max(1, int(math.ceil(abs(lam - lam0) / step)))
    lams = np.linspace(lam0, lam, n_hops + 1)
    ref = floquet_weights(spectrum_at(params, float(lams[0])), psi0)
    weights = ref.weights
    prev = ref
    for x in lams[1:]:
        cur = spectrum_at(params, float(x))
        perm, best = _match_columns(prev.eigenvectors, cur.eigenvectors)
        significant = weights > 1e-4
        if np.any(significant & (best < OVERLAP_THRESHOLD)):
            raise TrackingError(
                f"correspondence lost between lambda={prev.lam} and {x}; "
                "reduce the bridging step"
            )
        weights = _permute_weights(weights, perm, cur.n_states)
        prev = cur
    return float(np.sum(weights * state_p2(prev)))


def _permute_weights(w: np.ndarray, perm: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n)
    out[perm] = w
    return out


# ---------------------------------------------------------------------------
# state matching
# ---------------------------------------------------------------------------


def _match_columns(Va: np.ndarray, Vb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Assign each column of Va its maximal-|overlap| column of Vb.

    Returns (perm, best) with perm[i] the matched column in Vb and best[i]
    the achieved |overlap|.  The fast path takes the per-row argmax; on
    collision a global greedy assignment by descending overlap guarantees a
    permutation.
    """
    O = np.abs(Va.conj().T @ Vb)
    n = O.shape[0]
    perm = np.argmax(O, axis=1)
    best = O[np.arange(n), perm]
    if np.all(np.bincount(perm, minlength=n) == 1):
        return perm, best
    perm = np.full(n, -1)
    best = np.zeros(n)
    taken_row = np.zeros(n, dtype=bool)
    taken_col = np.zeros(n, dtype=bool)
    filled = 0
    for flat in np.argsort(O, axis=None)[::-1]:
        i, j = divmod(int(flat), n)
        if taken_row[i] or taken_col[j]:
            continue
        perm[i] = j
        best[i] = O[i, j]
        taken_row[i] = taken_col[j] = True
        filled += 1
        if filled == n:
            break
    return perm, best


def _row_ambiguity(Va: np.ndarray, Vb: np.ndarray) -> np.ndarray:
    """top1 - top2 overlap per row; small values mean ambiguous matches."""
    O = np.abs(Va.conj().T @ Vb)
    part = np.partition(O, O.shape[1] - 2, axis=1)
    top1 = part[:, -1]
    top2 = part[:, -2]
    return top1 - top2


# ---------------------------------------------------------------------------
# level dynamics sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ACRecord:
    """One avoided crossing: location, minimal circular gap, participants.

    slope_diff is the asymptotic |d eps/d lambda| difference of the two
    branches from the local hyperbolic fit; true_crossing marks gaps below
    the numerical floor (symmetry-forced degeneracies).
    """

    lambda_star: float
    gap_c: float
    track_ids: tuple[int, int]
    center_separation: float
    slope_diff: float = math.nan
    true_crossing: bool = False


@dataclass(frozen=True)
class LevelDynamics:
    """Eigenphase tracks over a lambda grid.

    Arrays are indexed [track, grid point].  A track's id is its state index
    (eigenphase order) at the first grid point.  `flags` lists
    (grid interval, track) pairs where matching was ambiguous.
    """

    lambda_grid: np.ndarray
    eigenphases: np.ndarray
    weights: np.ndarray
    centers: np.ndarray
    flags: tuple[tuple[int, int], ...] = ()
    crossings: tuple[ACRecord, ...] = ()

    @property
    def n_tracks(self) -> int:
        return self.eigenphases.shape[0]


def default_lambda_grid(n_points: int = 200) -> np.ndarray:
    """n_points uniform lambdas covering [0,1) without touching 0 or 1."""
    return (np.arange(n_points) + 0.5) / n_points


def _pair_masks(Va, Vb):
    perm, best = _match_columns(Va, Vb)
    margin = _row_ambiguity(Va, Vb)
    lost = best < OVERLAP_THRESHOLD
    tie = margin < TIE_TOLERANCE
    return perm, lost, tie


def _sweep_chunk(payload) -> dict:
    """Worker: spectra for a contiguous block of lambdas plus boundary data."""
    params, lams, psi0_amps = payload
    psi0 = WaveFunction(amps=psi0_amps, basis=MOMENTUM, kbar=params.kbar)
    eps, wts, ctrs, perms, losts, ties = [], [], [], [], [], []
    V_prev = None
    V_first = None
    for lam in lams:
        spec = floquet_weights(spectrum_at(params, float(lam)), psi0)
        eps.append(spec.eigenphases)
        wts.append(spec.weights)
        ctrs.append(spec.centers)
        if V_prev is None:
            V_first = spec.eigenvectors
        else:
            perm, lost, tie = _pair_masks(V_prev, spec.eigenvectors)
            perms.append(perm)
            losts.append(lost)
            ties.append(tie)
        V_prev = spec.eigenvectors
    return {
        "eps": np.array(eps),
        "weights": np.array(wts),
        "centers": np.array(ctrs),
        "perms": perms,
        "lost": losts,
        "tie": ties,
        "V_first": V_first,
        "V_last": V_prev,
    }


def level_dynamics_sweep(
    params: SimParams,
    lambda_grid: np.ndarray | None = None,
    psi0: WaveFunction | None = None,
    n_workers: int = 1,
    bisect_depth: int = 8,
    bisect_budget: int = 64,
) -> LevelDynamics:
    """Diagonalize U(lambda) over a grid and follow states adiabatically.

    States at consecutive grid points are matched by maximal eigenvector
    overlap.  Where a track's best overlap drops below the 0.5 threshold the
    grid step is bisected locally (extra diagonalizations, up to
    `bisect_depth` levels and `bisect_budget` total) before the interval is
    flagged; hybridization ties (two candidates within the 0.05 tie
    tolerance) are flagged directly since they persist at any step.
    """
    from .core import initial_state

    if lambda_grid is None:
        lambda_grid = default_lambda_grid()
    lambda_grid = np.asarray(lambda_grid, dtype=float)
    if lambda_grid.ndim != 1 or lambda_grid.size < 2:
        raise ValueError("lambda_grid must hold at least two points")
    if np.any(np.diff(lambda_grid) <= 0):
        raise ValueError("lambda_grid must be strictly increasing")
    if lambda_grid[0] <= 0.0 or lambda_grid[-1] >= 1.0:
        raise ValueError("lambda grid must lie inside (0,1)")
    if psi0 is None:
        psi0 = initial_state(params.M, "delta_p0", kbar=params.kbar)

    L = lambda_grid.size
    chunks = [
        (params, lambda_grid[i : i + SWEEP_CHUNK], psi0.amps)
        for i in range(0, L, SWEEP_CHUNK)
    ]
    results = parallel_map(_sweep_chunk, chunks, n_workers=n_workers)

    # stitch chunks: per-point data, within-chunk perms, boundary perms
    eps = np.concatenate([res["eps"] for res in results], axis=0)
    wts = np.concatenate([res["weights"] for res in results], axis=0)
    ctrs = np.concatenate([res["centers"] for res in results], axis=0)
    perms: list[np.ndarray] = []
    lost: list[np.ndarray] = []
    tie: list[np.ndarray] = []
    for ci, res in enumerate(results):
        if ci > 0:
            p, lo, ti = _pair_masks(results[ci - 1]["V_last"], res["V_first"])
            perms.append(p)
            lost.append(lo)
            tie.append(ti)
        perms.extend(res["perms"])
        lost.extend(res["lost"])
        tie.extend(res["tie"])

    # bisect intervals where a track was lost outright; ties at AC centers
    # are scale-invariant, so they are flagged without refinement
    budget = [bisect_budget]
    still_bad: list[np.ndarray] = []
    for i in range(L - 1):
        bad = lost[i] | tie[i]
        if np.any(lost[i]) and budget[0] > 2:
            budget[0] -= 2
            V_a = spectrum_at(params, float(lambda_grid[i])).eigenvectors
            V_b = spectrum_at(params, float(lambda_grid[i + 1])).eigenvectors
            perm_new, still = _refine_interval(
                params,
                float(lambda_grid[i]),
                V_a,
                float(lambda_grid[i + 1]),
                V_b,
                bisect_depth,
                budget,
            )
            perms[i] = perm_new
            bad = still
        still_bad.append(bad)

    # compose permutations into track rows, translating flags to track ids
    n = eps.shape[1]
    flags: list[tuple[int, int]] = []
    tracks_eps = np.empty((n, L))
    tracks_w = np.empty((n, L))
    tracks_c = np.empty((n, L))
    cur = np.arange(n)
    tracks_eps[:, 0] = eps[0]
    tracks_w[:, 0] = wts[0]
    tracks_c[:, 0] = ctrs[0]
    for i in range(L - 1):
        if np.any(still_bad[i]):
            flags.extend((i, int(t)) for t in np.flatnonzero(still_bad[i][cur]))
        cur = np.asarray(perms[i])[cur]
        tracks_eps[:, i + 1] = eps[i + 1][cur]
        tracks_w[:, i + 1] = wts[i + 1][cur]
        tracks_c[:, i + 1] = ctrs[i + 1][cur]

    if flags:
        log.info("level dynamics: %d ambiguous matching intervals flagged", len(flags))
    return LevelDynamics(
        lambda_grid=lambda_grid,
        eigenphases=tracks_eps,
        weights=tracks_w,
        centers=tracks_c,
        flags=tuple(flags),
    )


def _refine_interval(params, lam_a, V_a, lam_b, V_b, depth, budget):
    """Re-match across [lam_a, lam_b], recursively inserting midpoints.

    Returns (perm, still_ambiguous).  Recursion stops when no track is lost,
    the depth is exhausted, or the diagonalization budget runs out.
    """
    perm, lo, ti = _pair_masks(V_a, V_b)
    if not np.any(lo) or depth <= 0 or budget[0] <= 0:
        return perm, lo | ti
    budget[0] -= 1
    lam_m = (lam_a + lam_b) / 2.0
    V_m = spectrum_at(params, lam_m).eigenvectors
    p1, s1 = _refine_interval(params, lam_a, V_a, lam_m, V_m, depth - 1, budget)
    p2, s2 = _refine_interval(params, lam_m, V_m, lam_b, V_b, depth - 1, budget)
    return p2[p1], s1 | s2[p1]


# ---------------------------------------------------------------------------
# avoided crossings
# ---------------------------------------------------------------------------


def _hyperbola_refine(x: np.ndarray, g: np.ndarray):
    """Fit gap^2 = s^2 (x - x*)^2 + C^2 through three points.

    Returns (x*, C, s) or None when the fit is not convex.  Exact on the
    universal two-level form, which is what gap minima look like locally.
    """
    coeff = np.polyfit(x, g * g, 2)
    A, B, D = coeff
    if A <= 0.0:
        return None
    xs = -B / (2.0 * A)
    c2 = D - A * xs * xs
    if xs < x[0] or xs > x[2]:
        return None
    C = math.sqrt(c2) if c2 > 0.0 else 0.0
    return float(xs), float(C), float(math.sqrt(A))


def detect_avoided_crossings(
    ld: LevelDynamics,
    gap_evaluator=None,
    refine_iters: int = 24,
) -> tuple[ACRecord, ...]:
    """Locate minima of the circular gap between eigenphase-adjacent tracks.

    For every pair of tracks adjacent in eigenphase at some grid point, local
    minima of their circular gap over lambda are refined by a three-point
    hyperbolic fit (exact for two-level form).  When `gap_evaluator` is given
    (a callable (track_a, track_b, lambda) -> gap), minima are instead
    refined by golden-section search on the true gap, the spec's bisection
    mode.  Gaps below the numerical floor are classified as true crossings.
    """
    eps = ld.eigenphases
    lam = ld.lambda_grid
    n, L = eps.shape
    pair_gaps: dict[tuple[int, int], dict[int, float]] = {}
    for i in range(L):
        order = np.argsort(eps[:, i], kind="stable")
        e_sorted = eps[order, i]
        gaps = np.empty(n)
        gaps[:-1] = e_sorted[1:] - e_sorted[:-1]
        gaps[-1] = 2.0 * np.pi - (e_sorted[-1] - e_sorted[0])
        for j in range(n):
            a = int(order[j])
            b = int(order[(j + 1) % n])
            key = (a, b) if a < b else (b, a)
            g = float(gaps[j])
            cur = pair_gaps.setdefault(key, {})
            if i not in cur or g < cur[i]:
                cur[i] = g

    records: list[ACRecord] = []
    for (a, b), series in pair_gaps.items():
        idx = np.array(sorted(series))
        gvals = np.array([series[i] for i in idx])
        # split into contiguous adjacency runs
        breaks = np.flatnonzero(np.diff(idx) > 1)
        starts = np.concatenate([[0], breaks + 1])
        ends = np.concatenate([breaks, [idx.size - 1]])
        for s, e in zip(starts, ends):
            for j in range(s + 1, e):
                if not (gvals[j] <= gvals[j - 1] and gvals[j] <= gvals[j + 1]):
                    continue
                strict = gvals[j] < gvals[j - 1] or gvals[j] < gvals[j + 1]
                if not strict:
                    # flat plateau: only degenerate (true-crossing) plateaus
                    # are reported, once, at their first interior point
                    if gvals[j] >= TRUE_CROSSING_FLOOR:
                        continue
                    if gvals[j] == gvals[j - 1] and j - 1 > s:
                        continue
                i0 = int(idx[j])
                x3 = lam[[int(idx[j - 1]), i0, int(idx[j + 1])]]
                g3 = gvals[[j - 1, j, j + 1]]
                lam_star, gap_c, slope = lam[i0], gvals[j], math.nan
                if gap_evaluator is not None:
                    lam_star, gap_c = _golden_refine(
                        lambda x: gap_evaluator(a, b, x), x3[0], x3[2], refine_iters
                    )
                    fit = _hyperbola_refine(x3, g3)
                    if fit is not None:
                        slope = fit[2]
                else:
                    fit = _hyperbola_refine(x3, g3)
                    if fit is not None:
                        lam_star, gap_c, slope = fit
                        gap_c = min(gap_c, float(gvals[j]))
                sep = abs(ld.centers[a, i0] - ld.centers[b, i0])
                records.append(
                    ACRecord(
                        lambda_star=float(lam_star),
                        gap_c=max(float(gap_c), 1e-300),
                        track_ids=(a, b),
                        center_separation=float(sep),
                        slope_diff=slope,
                        true_crossing=bool(gap_c < TRUE_CROSSING_FLOOR),
                    )
                )
    records.sort(key=lambda r: (r.lambda_star, r.track_ids))
    return tuple(records)


def _golden_refine(f, lo, hi, iters):
    """Golden-section minimum of f on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - invphi * (hi - lo)
    x2 = lo + invphi * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 < f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - invphi * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (hi - lo)
            f2 = f(x2)
    xm = (lo + hi) / 2.0
    return xm, f(xm)


def attach_crossings(ld: LevelDynamics, **kwargs) -> LevelDynamics:
    """Return the dynamics with detected crossings attached."""
    return replace(ld, crossings=detect_avoided_crossings(ld, **kwargs))


# ---------------------------------------------------------------------------
# distance to the next avoided crossing
# ---------------------------------------------------------------------------


def landau_zener_c_min(slope_diff: float, drift_rate: float) -> float:
    """Diabatic cutoff: ACs smaller than this are crossed diabatically.

    sqrt(2*pi * |slope difference| * |r-1|); the sweep rate of lambda is
    (r-1) per period.
    """
    if not math.isfinite(slope_diff):
        return 0.0
    return math.sqrt(2.0 * math.pi * abs(slope_diff) * abs(drift_rate))


def delta_lambda_c(
    ld: LevelDynamics,
    lambda0: float,
    weight_threshold: float = 1e-2,
    c_min: float | None = None,
    drift_rate: float | None = None,
    average: str = "mean",
) -> float:
    """Mean distance from lambda0 to the nearest effective AC.

    Averages, over tracks initially populated at lambda0 (weight above
    `weight_threshold`), the circular distance to the nearest avoided
    crossing involving that track whose gap exceeds the diabatic cutoff.
    The cutoff is the fixed `c_min` when given, otherwise the per-AC
    Landau-Zener estimate from `drift_rate` = |r-1|.
    """
    if not ld.crossings:
        raise ValidityError("no crossings attached; run detect_avoided_crossings")
    if c_min is None and drift_rate is None:
        raise ValueError("provide either c_min or drift_rate")
    if average not in ("mean", "median"):
        raise ValueError(f"unknown average {average!r}")
    i0 = int(np.argmin(np.abs(ld.lambda_grid - lambda0)))
    populated = np.flatnonzero(ld.weights[:, i0] > weight_threshold)
    if populated.size == 0:
        raise ValidityError(
            f"no tracks with weight > {weight_threshold} at lambda0={lambda0}"
        )
    by_track: dict[int, list[float]] = {int(t): [] for t in populated}
    for rec in ld.crossings:
        if rec.true_crossing:
            continue
        cut = c_min if c_min is not None else landau_zener_c_min(rec.slope_diff, drift_rate)
        if rec.gap_c <= cut:
            continue
        d = abs(rec.lambda_star - lambda0)
        d = min(d, 1.0 - d)
        for t in rec.track_ids:
            if t in by_track:
                by_track[t].append(d)
    nearest = [min(ds) for ds in by_track.values() if ds]
    if not nearest:
        raise ValidityError(
            "no qualifying avoided crossing within the grid; "
            "grid too narrow or cutoff too large"
        )
    if average == "median":
        return float(np.median(nearest))
    return float(np.mean(nearest))
