"""Probe-qubit tunneling spectroscopy over any dynamical backend.

The five-leg protocol anneals the system back to ``s_star``, brings the
probe to ``s_P``, holds at a probe bias ``h_P`` for a time ``tau``, and
returns; what survives in the all-ones state decays with the tunneling
rate at that bias.  This module drives the (h_P x tau) scan, fits
``P = a + b exp(-Gamma tau)`` per bias point, locates the resonance peaks
of ``Gamma(h_P)``, and converts them back into physics: a peak pair
spaced ``dh`` apart measures an energy gap ``2 B dh``, and the long-hold
plateau at a peak measures the relative eigenstate population
``P / (1 - P)``.

Hold times and ``tau1`` are microseconds for the master-equation backend
and whole sweeps for the Monte Carlo backends, so the fitted rates come
out in inverse microseconds and inverse sweeps respectively.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from . import langevin, mesolver, model, sqa, sssv
from .bath import BathSpec
from .spectrum import gibbs_populations

BACKENDS = ("me", "sqa", "sssv", "langevin")

H_P_GRID_POINTS = 121     # default probe-bias resolution
H_P_GRID_PAD = 0.10       # fractional padding beyond the outer resonances
TAU_GRID_POINTS = 8       # hold times per bias point (geometric ladder)
MC_REPETITIONS = 10_000   # desk-scale default; the reference runs used 1e6
MC_TAU1_SWEEPS = 5        # ramp sweeps per leg for the stochastic backends
ME_TAU1_US = 10.0         # ramp time per leg for the master equation
S_STAR_DIMER = 0.339      # standard study points for the bundled instances
S_STAR_RING = 0.284

PEAK_WINDOW = 3           # grid points kept on each side of a maximum
PEAK_MAD_FACTOR = 3.0     # detection threshold = median + factor * MAD
CI_95 = 1.959963984540054  # two-sided 95% normal quantile


@dataclass(frozen=True)
class ProtocolParams:
    """Five-leg protocol settings shared by every backend.

    ``s_P`` defaults to ``s_star`` (the probe leg stops where the system
    leg stops); pass a larger value to keep the probe's transverse field
    small.  ``repetitions`` only matters for the stochastic backends.
    """

    s_star: float
    tau1: float
    tau_grid: np.ndarray
    h_P_grid: np.ndarray
    s_P: float = None
    repetitions: int = MC_REPETITIONS

    def __post_init__(self):
        if not 0.0 < self.s_star <= 1.0:
            raise ValueError("s_star must lie in (0, 1]")
        s_P = self.s_star if self.s_P is None else float(self.s_P)
        if not self.s_star <= s_P <= 1.0:
            raise ValueError("need s_star <= s_P <= 1")
        if self.tau1 <= 0.0:
            raise ValueError("tau1 must be positive")
        tau = np.asarray(self.tau_grid, dtype=float)
        if tau.ndim != 1 or len(tau) < 4 or np.any(np.diff(tau) <= 0):
            raise ValueError("tau_grid must be ascending with >= 4 points")
        if tau[0] < 0.0 or not np.all(np.isfinite(tau)):
            raise ValueError("hold times must be finite and non-negative")
        h = np.asarray(self.h_P_grid, dtype=float)
        if h.ndim != 1 or len(h) < 1 or np.any(np.diff(h) <= 0):
            raise ValueError("h_P_grid must be ascending")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        object.__setattr__(self, "s_P", s_P)
        object.__setattr__(self, "tau_grid", tau)
        object.__setattr__(self, "h_P_grid", h)


@dataclass(frozen=True)
class RateFit:
    """One decay fit ``P(tau) = a + b exp(-gamma tau)`` at fixed h_P.

    ``flagged`` marks degenerate (constant data) or non-converged fits;
    peak finding skips them.  ``gamma`` is clamped at zero when the best
    fit came out growing, which only happens on flagged points.
    """

    a: float
    b: float
    gamma: float
    covariance: np.ndarray  # (3, 3) in parameter order (a, b, gamma)
    residual: float         # sum of squared errors at the optimum
    flagged: bool = False

    @property
    def gamma_stderr(self) -> float:
        v = float(self.covariance[2, 2])
        return math.sqrt(v) if math.isfinite(v) and v >= 0.0 else math.inf


@dataclass(frozen=True)
class PeakFit:
    """A Gaussian refined around one local maximum of the rate scan.

    ``edge`` marks one-sided windows at the grid boundary and fits that
    failed or escaped their window (those keep the raw maximum and report
    nan confidence bounds).
    """

    position: float
    width: float
    ci_low: float
    ci_high: float
    amplitude: float
    edge: bool = False


@dataclass(frozen=True)
class TunnelingScan:
    """Everything one scan produces, from raw grid to reconstruction.

    ``probabilities[i, j]`` is P(all ones) at ``h_P_grid[i]``,
    ``tau_grid[j]``.  ``gaps`` holds ``2B (h_k - h_1)`` per peak relative
    to the first one; ``populations`` the plateau ratio ``a / (1 - a)``
    per peak (nan where the plateau fell outside [0, 1)).
    """

    backend: str
    h_P_grid: np.ndarray
    tau_grid: np.ndarray
    probabilities: np.ndarray
    fits: tuple
    peaks: tuple
    gaps: np.ndarray
    populations: np.ndarray

    @property
    def rates(self) -> np.ndarray:
        return np.array([f.gamma for f in self.fits])

    @property
    def flags(self) -> np.ndarray:
        return np.array([f.flagged for f in self.fits])


# ---------------------------------------------------------------------------
# Resonance geometry and default grids


def system_levels(problem, schedule, s_star: float) -> np.ndarray:
    """Ascending eigenvalues of the bare system Hamiltonian at s_star."""
    A_S, _, B = schedule.evaluate(s_star)
    return np.linalg.eigvalsh(model.build_system_hamiltonian(problem, A_S, B))


def resonance_positions(problem, schedule, s_star: float,
                        n_levels: int = 3) -> np.ndarray:
    """Probe biases where level n crosses the returning reference state.

    The probe-up sector rides at ``E_n - B h_P`` while the probe-down
    ground state rides at ``eps0 + B h_P`` (eps0 from the offset-field
    Hamiltonian), so the crossings sit at ``(E_n - eps0) / (2B)``.
    """
    if n_levels < 1:
        raise ValueError("need at least one level")
    A_S, _, B = schedule.evaluate(s_star)
    if B <= 0.0:
        raise ValueError("resonances are undefined where B vanishes")
    E = system_levels(problem, schedule, s_star)[:n_levels]
    eps0 = np.linalg.eigvalsh(
        model.build_probe_down_hamiltonian(problem, A_S, B))[0]
    return (E - eps0) / (2.0 * B)


def default_h_P_grid(problem, schedule, s_star: float, n_levels: int = 3,
                     points: int = H_P_GRID_POINTS) -> np.ndarray:
    """Bias grid spanning the kept resonances, padded 10% on each side."""
    if points < 2:
        raise ValueError("grid needs at least two points")
    res = resonance_positions(problem, schedule, s_star, n_levels)
    lo, hi = float(res.min()), float(res.max())
    span = hi - lo
    if span <= 0.0:
        span = max(abs(hi), 1.0)  # single resonance: pad around it
    return np.linspace(lo - H_P_GRID_PAD * span, hi + H_P_GRID_PAD * span,
                       points)


def default_tau_grid(tau_min: float, tau_max: float,
                     points: int = TAU_GRID_POINTS) -> np.ndarray:
    """Geometric ladder of hold times; eight points pin the 3-parameter
    decay fit with headroom while keeping the scan affordable."""
    if not 0.0 < tau_min < tau_max:
        raise ValueError("need 0 < tau_min < tau_max")
    if points < 4:
        raise ValueError("the decay fit needs at least 4 hold times")
    return np.geomspace(tau_min, tau_max, points)


# ---------------------------------------------------------------------------
# Protocol execution


def mc_schedule_tables(problem, schedule, params: ProtocolParams, tau: float):
    """Per-sweep amplitude rows realizing the five legs for MC backends.

    Each ramp leg takes round(tau1) sweeps and the hold round(tau); ramp
    sweep k runs at the post-sweep anneal fraction, so the last row of
    every leg sits exactly on the leg target and the final row at s = 1.
    """
    t1 = int(round(params.tau1))
    hold = int(round(tau))
    if t1 < 1:
        raise ValueError("tau1 must round to at least one sweep")
    if hold < 0:
        raise ValueError("hold must be non-negative")
    n_sys = problem.n_system
    nq = problem.n_qubits
    s_star, s_P = params.s_star, params.s_P
    steps = np.arange(1, t1 + 1) / t1

    def block(s_sys, s_probe):
        s_sys, s_probe = np.broadcast_arrays(
            np.atleast_1d(np.asarray(s_sys, dtype=float)),
            np.atleast_1d(np.asarray(s_probe, dtype=float)))
        A = np.empty((len(s_sys), nq))
        A[:, :n_sys] = np.atleast_1d(schedule.evaluate(s_sys)[0])[:, None]
        A[:, n_sys] = np.atleast_1d(schedule.evaluate(s_probe)[1])
        B = np.atleast_1d(schedule.evaluate(s_sys)[2])
        return A, B

    legs = [
        block(1.0 + (s_star - 1.0) * steps, 1.0),      # system 1 -> s*
        block(s_star, 1.0 + (s_P - 1.0) * steps),      # probe 1 -> s_P
        block(np.full(hold, s_star), s_P),             # hold
        block(s_star, s_P + (1.0 - s_P) * steps),      # probe s_P -> 1
        block(s_star + (1.0 - s_star) * steps, 1.0),   # system s* -> 1
    ]
    A_table = np.vstack([A for A, _ in legs])
    B_table = np.concatenate([B for _, B in legs])
    return A_table, B_table


def run_protocol(backend: str, problem, schedule, params: ProtocolParams,
                 h_P: float, tau: float, *, bath: BathSpec = None,
                 temperature: float = 0.0125, seed=None,
                 n_tau: int = sqa.SQA_DEFAULT_N_TAU,
                 chi: float = langevin.LANGEVIN_CHI,
                 m: int = None, me_steps: int = 0) -> float:
    """P(all ones) after the five-leg protocol at one (h_P, tau) point.

    ``bath`` feeds the master equation; None runs it coherently, matching
    the solver's convention, so dissipative runs must pass a BathSpec
    (the scan drivers fill in the default ohmic one).  ``temperature``
    sets the Metropolis/Langevin temperature in kelvin.  The Langevin
    backend reports the probe weight ``(1 - <M_P^z>) / 2``, which plays
    the role of the all-ones probability for a spin-vector model.
    Backend failures re-raise with the scan point attached.
    """
    if backend not in BACKENDS:
        raise ValueError(f"backend must be one of {BACKENDS}")
    if tau < 0.0:
        raise ValueError("hold time must be non-negative")
    try:
        if backend == "me":
            return mesolver.run_protocol(
                problem, schedule, bath, s_star=params.s_star,
                s_P=params.s_P, tau1=params.tau1, tau=tau, h_P=float(h_P),
                m=m, steps=me_steps)
        if backend == "langevin":
            mz = langevin.run_protocol_langevin(
                problem, schedule, params.s_star, params.s_P, float(h_P),
                tau, chi=chi, temperature=temperature,
                repetitions=params.repetitions, seed=seed)
            return 0.5 * (1.0 - mz)
        prob = problem.with_h_P(float(h_P))
        A_table, B_table = mc_schedule_tables(prob, schedule, params, tau)
        beta = 1.0 / (model.KB_GHZ_PER_K * temperature)
        if backend == "sqa":
            hist = sqa.run_chains(
                prob, A_table, B_table, beta,
                repetitions=params.repetitions, n_tau=n_tau, seed=seed,
                init_bits=np.ones(prob.n_qubits, dtype=np.int64))
        else:
            hist = sssv.run_chains(
                prob, A_table, B_table, beta,
                repetitions=params.repetitions, seed=seed,
                init_theta=np.full(prob.n_qubits, math.pi))
        return float(hist[-1]) / params.repetitions
    except (ValueError, RuntimeError) as exc:
        raise RuntimeError(
            f"{backend} protocol failed at h_P={h_P:.6g}, tau={tau:.6g}: "
            f"{exc}") from exc


# ---------------------------------------------------------------------------
# Decay-rate extraction


def _decay(tau, a, b, g):
    # trial steps can overshoot to large negative g; cap the argument so
    # LM sees a finite (terrible) residual instead of an overflow warning
    return a + b * np.exp(np.minimum(-g * tau, 700.0))


def extract_rate(tau_grid, P_values) -> RateFit:
    """Least-squares (a, b, gamma) for ``P = a + b exp(-gamma tau)``.

    Levenberg-Marquardt from three gamma starts (the inverse of the
    longest, middle, and shortest positive hold); the lowest-residual fit
    wins.  Constant data short-circuits to a flagged zero-rate fit, and
    fits that never converge or come out growing are flagged too.
    """
    tau = np.asarray(tau_grid, dtype=float)
    P = np.asarray(P_values, dtype=float)
    if tau.ndim != 1 or tau.shape != P.shape or len(tau) < 4:
        raise ValueError("need matching 1-D grids with >= 4 points")
    if np.any(np.diff(tau) <= 0):
        raise ValueError("tau_grid must be ascending")
    if not (np.all(np.isfinite(tau)) and np.all(np.isfinite(P))):
        raise ValueError("hold times and probabilities must be finite")

    nan_cov = np.full((3, 3), np.nan)
    a0 = float(P[-1])
    if float(P.max() - P.min()) == 0.0:
        return RateFit(a0, 0.0, 0.0, nan_cov, 0.0, flagged=True)

    positive = tau[tau > 0]
    t_lo = float(positive[0]) if len(positive) else float(tau[-1])
    b0 = float(P[0] - P[-1])
    best = None
    for g0 in (1.0 / tau[-1], 1.0 / tau[len(tau) // 2], 1.0 / t_lo):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", OptimizeWarning)
                popt, pcov = curve_fit(_decay, tau, P, p0=(a0, b0, g0),
                                       method="lm", maxfev=5000)
        except RuntimeError:
            continue
        resid = float(np.sum((_decay(tau, *popt) - P) ** 2))
        if best is None or resid < best[2]:
            best = (popt, pcov, resid)
    if best is None:
        return RateFit(a0, b0, 0.0, nan_cov, math.inf, flagged=True)
    (a, b, g), pcov, resid = best
    flagged = bool(g < 0.0 or not np.all(np.isfinite(pcov)))
    return RateFit(float(a), float(b), max(float(g), 0.0),
                   np.asarray(pcov, dtype=float), resid, flagged)


# ---------------------------------------------------------------------------
# Peak finding


def _gauss(x, amp, mu, sig, base):
    return base + amp * np.exp(-0.5 * ((x - mu) / sig) ** 2)


def find_peaks(h_P_grid, rates, *, flagged=None) -> tuple:
    """Gaussian-refined local maxima of the rate scan.

    Detection threshold is median + 3 MAD of the usable rates (raw median
    absolute deviation, no consistency factor).  Each maximum above it is
    refined by a four-parameter Gaussian over +-3 grid points; windows
    clipped at the boundary, fits that fail, and fits whose mean escapes
    the window keep the raw maximum and carry the ``edge`` flag.  Flagged
    rate fits are dropped before detection.
    """
    h = np.asarray(h_P_grid, dtype=float)
    r = np.asarray(rates, dtype=float)
    if h.ndim != 1 or h.shape != r.shape:
        raise ValueError("grid and rates must be matching 1-D arrays")
    if np.any(np.diff(h) <= 0):
        raise ValueError("h_P_grid must be ascending")
    if flagged is not None:
        keep = ~np.asarray(flagged, dtype=bool)
        if keep.shape != h.shape:
            raise ValueError("flag mask must match the grid")
        h, r = h[keep], r[keep]
    n = len(h)
    if n < 7:
        raise ValueError("peak finding needs >= 7 usable points")

    med = float(np.median(r))
    mad = float(np.median(np.abs(r - med)))
    threshold = med + PEAK_MAD_FACTOR * mad
    step = float(np.median(np.diff(h)))

    peaks = []
    for i in range(n):
        left = r[i - 1] if i > 0 else -math.inf
        right = r[i + 1] if i < n - 1 else -math.inf
        if not (r[i] > threshold and r[i] > left and r[i] >= right):
            continue
        lo = max(0, i - PEAK_WINDOW)
        hi = min(n, i + PEAK_WINDOW + 1)
        edge = (hi - lo) < 2 * PEAK_WINDOW + 1
        x, y = h[lo:hi], r[lo:hi]
        base0 = float(y.min())
        amp0 = max(float(r[i] - base0), 1e-12)
        fit = None
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", OptimizeWarning)
                fit = curve_fit(_gauss, x, y, p0=(amp0, h[i], step, base0),
                                maxfev=5000)
        except (RuntimeError, TypeError):
            pass
        if fit is not None:
            (amp, mu, sig, _), pcov = fit
            inside = x[0] <= mu <= x[-1]
            if inside and amp > 0.0:
                var = float(pcov[1, 1])
                half = CI_95 * math.sqrt(var) if (math.isfinite(var)
                                                  and var >= 0) else math.nan
                peaks.append(PeakFit(float(mu), abs(float(sig)),
                                     float(mu - half), float(mu + half),
                                     float(amp), edge))
                continue
        peaks.append(PeakFit(float(h[i]), abs(step), math.nan, math.nan,
                             float(r[i]), True))
    return tuple(sorted(peaks, key=lambda p: p.position))


# ---------------------------------------------------------------------------
# Reconstruction


def gap_from_peaks(h_P_1: float, h_P_2: float, B: float) -> float:
    """Level spacing implied by two resonance positions.

    Raising h_P pushes the probe-up sector down and the reference state
    up, each at rate B, so a bias spacing dh measures a gap 2 B dh.
    """
    if not all(map(math.isfinite, (h_P_1, h_P_2, B))):
        raise ValueError("peak positions and B must be finite")
    return 2.0 * B * (h_P_2 - h_P_1)


def populations_from_hold(P_all_ones) -> np.ndarray:
    """Relative eigenstate populations from long-hold plateaus.

    At a resonance the reference state and the matched level equalize, so
    the plateau P splits the probe-down weight 1 - P in the ratio
    P / (1 - P), which is the population of the resonant level relative
    to the system ground state.
    """
    P = np.asarray(P_all_ones, dtype=float)
    if not np.all(np.isfinite(P)) or np.any(P < 0.0) or np.any(P >= 1.0):
        raise ValueError("each probability must lie in [0, 1)")
    return P / (1.0 - P)


def _peak_plateaus(h_P_grid, fits, peaks) -> np.ndarray:
    """Fitted plateau ``a`` interpolated to each fitted peak position.

    The plateau crosses a resonance as a steep thermal sigmoid, so the
    nearest grid point can sit half a step up the flank; interpolating
    to the fitted position removes that first-order bias.
    """
    usable = [(float(h), f.a) for h, f in zip(h_P_grid, fits)
              if not f.flagged]
    out = np.full(len(peaks), np.nan)
    if not usable:
        return out
    hs = np.array([u[0] for u in usable])
    vals = np.array([u[1] for u in usable])
    for k, pk in enumerate(peaks):
        out[k] = np.interp(pk.position, hs, vals)
    return out


def measure_populations(backend: str, problem, schedule,
                        params: ProtocolParams, positions, tau_hold: float,
                        *, bath: BathSpec = None,
                        temperature: float = 0.0125, seed=None,
                        n_tau: int = sqa.SQA_DEFAULT_N_TAU,
                        chi: float = langevin.LANGEVIN_CHI,
                        m: int = None, me_steps: int = 0) -> np.ndarray:
    """Relative populations from one long hold at each bias position.

    Runs the full protocol with the hold ``tau_hold`` at each entry of
    ``positions`` (typically fitted peak positions) and maps the all-ones
    probability through ``populations_from_hold``; probabilities outside
    [0, 1) come back as nan.
    """
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 1 or not np.all(np.isfinite(pos)):
        raise ValueError("positions must be a finite 1-D array")
    if backend == "me" and bath is None:
        bath = BathSpec()
    seeds = np.random.SeedSequence(seed).generate_state(
        len(pos), dtype=np.uint64)
    out = np.full(len(pos), np.nan)
    for i, h_P in enumerate(pos):
        p = run_protocol(backend, problem, schedule, params, float(h_P),
                         tau_hold, bath=bath, temperature=temperature,
                         seed=int(seeds[i]), n_tau=n_tau, chi=chi, m=m,
                         me_steps=me_steps)
        if 0.0 <= p < 1.0:
            out[i] = p / (1.0 - p)
    return out


def scan_tunneling(backend: str, problem, schedule,
                   params: ProtocolParams, *, bath: BathSpec = None,
                   temperature: float = 0.0125, seed=None,
                   n_tau: int = sqa.SQA_DEFAULT_N_TAU,
                   chi: float = langevin.LANGEVIN_CHI,
                   m: int = None, me_steps: int = 0,
                   workers: int = 1) -> TunnelingScan:
    """Full tunneling scan: probabilities, rate fits, peaks, gaps.

    The master equation uses the shared-leg fast path over the whole
    grid; the stochastic backends run one independent job per (h_P, tau)
    point with a seed keyed to the grid index, so results do not depend
    on execution order or on ``workers``.  Monte Carlo holds are rounded
    to whole sweeps; pass integer-valued hold grids for those backends.
    """
    if backend not in BACKENDS:
        raise ValueError(f"backend must be one of {BACKENDS}")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    h_grid = params.h_P_grid
    tau_grid = params.tau_grid
    if backend == "me":
        if bath is None:
            bath = BathSpec()
        probabilities = mesolver.probe_bias_scan(
            problem, schedule, bath, s_star=params.s_star, s_P=params.s_P,
            tau1=params.tau1, tau_grid=tau_grid, h_P_grid=h_grid, m=m,
            steps=me_steps)
    else:
        point_seeds = np.random.SeedSequence(seed).generate_state(
            len(h_grid) * len(tau_grid), dtype=np.uint64)
        point_seeds = point_seeds.reshape(len(h_grid), len(tau_grid))
        probabilities = np.empty((len(h_grid), len(tau_grid)))

        def point(ij):
            i, j = ij
            return run_protocol(
                backend, problem, schedule, params, h_grid[i], tau_grid[j],
                bath=bath, temperature=temperature,
                seed=int(point_seeds[i, j]), n_tau=n_tau, chi=chi)

        indices = [(i, j) for i in range(len(h_grid))
                   for j in range(len(tau_grid))]
        if workers == 1:
            values = map(point, indices)
        else:
            # the samplers release the GIL inside numba kernels, so plain
            # threads scale; each point owns its seed, so any schedule
            # reproduces the same table
            with ThreadPoolExecutor(max_workers=workers) as pool:
                values = pool.map(point, indices)
        for (i, j), v in zip(indices, values):
            probabilities[i, j] = v

    fits = tuple(extract_rate(tau_grid, probabilities[i])
                 for i in range(len(h_grid)))
    flags = np.array([f.flagged for f in fits])
    # heavy flagging (short noisy grids) yields an empty peak list rather
    # than an error; callers inspect scan.flags to see why
    if int(np.count_nonzero(~flags)) >= 7:
        peaks = find_peaks(h_grid, np.array([f.gamma for f in fits]),
                           flagged=flags)
    else:
        peaks = ()

    B = schedule.evaluate(params.s_star)[2]
    gaps = np.array([gap_from_peaks(peaks[0].position, pk.position, B)
                     for pk in peaks]) if peaks else np.empty(0)
    plateaus = _peak_plateaus(h_grid, fits, peaks)
    populations = np.full(len(peaks), np.nan)
    ok = np.isfinite(plateaus) & (plateaus >= 0.0) & (plateaus < 1.0)
    if np.any(ok):
        populations[ok] = populations_from_hold(plateaus[ok])
    return TunnelingScan(backend, h_grid, tau_grid, probabilities, fits,
                         peaks, gaps, populations)


def reconstruction_rows(scan: TunnelingScan, problem, schedule,
                        s_star: float, *,
                        temperature: float = 0.0125) -> tuple:
    """Per-peak comparison rows against exact diagonalization.

    Each peak is tagged with the level (1-based, ground first) whose
    theoretical resonance lies nearest; rows carry (level, measured gap to
    the first peak, exact gap E_level - E_1, measured population, Gibbs
    population of the system Hamiltonian at s_star).
    """
    E = system_levels(problem, schedule, s_star)
    res = resonance_positions(problem, schedule, s_star, n_levels=len(E))
    beta = 1.0 / (model.KB_GHZ_PER_K * temperature)
    gibbs = gibbs_populations(E, beta)
    rows = []
    for k, pk in enumerate(scan.peaks):
        level = int(np.argmin(np.abs(res - pk.position)))
        rows.append((level + 1, float(scan.gaps[k]),
                     float(E[level] - E[0]), float(scan.populations[k]),
                     float(gibbs[level])))
    return tuple(rows)


# ---------------------------------------------------------------------------
# Persistence


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.12g}" if isinstance(v, float) else v
                             for v in row])


def write_scan_csv(path, scan: TunnelingScan) -> None:
    """One row per bias point: h_P, a, b, Gamma, Gamma_stderr, residual."""
    rows = [(float(h), f.a, f.b, f.gamma, f.gamma_stderr, f.residual)
            for h, f in zip(scan.h_P_grid, scan.fits)]
    _write_csv(path, ["h_P", "a", "b", "Gamma", "Gamma_stderr", "residual"],
               rows)


def write_peaks_csv(path, scan: TunnelingScan) -> None:
    """One row per peak: position, CI_low, CI_high, width."""
    rows = [(p.position, p.ci_low, p.ci_high, p.width) for p in scan.peaks]
    _write_csv(path, ["position", "CI_low", "CI_high", "width"], rows)


def write_reconstruction_csv(path, rows) -> None:
    """Rows from ``reconstruction_rows``: level index, gaps, populations."""
    _write_csv(path, ["level_index", "gap_GHz", "gap_theory_GHz",
                      "population", "population_gibbs"], rows)
