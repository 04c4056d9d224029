"""Adiabatic quantum master equation in the co-moving truncated eigenbasis.

The solver follows the annealed Hamiltonian through a chain of spectral
frames: each slice re-diagonalizes H, matches the gauge to the previous
frame, transports the density matrix by the inter-frame rotation, and
applies the slice-frozen generator.  With one Lindblad operator per
eigenpair transition the frozen evolution factorizes exactly: populations
follow a Pauli rate equation while every coherence carries an analytic
phase-and-decay factor, so splitting the coherent part from the dissipator
costs nothing within a slice.  Slices are Strang-ordered (half generator,
rotation, half generator) for second-order accuracy in the slice width.

Units: energies in GHz (h = 1), time in microseconds.  A rate kernel value
of gamma GHz converts to 1000*gamma per microsecond, and a level pair split
by delta GHz accumulates 2*pi*1000*delta radians per microsecond.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from . import model
from .bath import BathSpec, gamma, lamb_shift_table
from .spectrum import SpectralFrame, eigendecompose, track_eigenbasis

RATE_SCALE = 1000.0            # GHz -> 1/us for dissipative rates
PHASE_SCALE = 2000.0 * math.pi  # rad/us per GHz of level splitting
LEAK_TOL = 1e-3                # kept-subspace population floor
BOHR_GROUP_TOL = 1e-9          # GHz; gaps closer than this share one rate
STEPS_PER_UNIT_S = 600         # ramp slices per unit anneal fraction
MIN_LEG_STEPS = 40


class MELeakError(RuntimeError):
    """Population escaped the kept subspace beyond LEAK_TOL."""

    def __init__(self, kept: float, t: float, s_system: float, s_probe: float):
        self.kept = kept
        self.t = t
        self.s_system = s_system
        self.s_probe = s_probe
        super().__init__(
            f"kept-subspace population {kept:.6f} < {1.0 - LEAK_TOL} "
            f"at t={t:.3f} us (s_system={s_system:.4f}, s_probe={s_probe:.4f})")


@dataclass(frozen=True)
class AnnealLeg:
    """One protocol leg: system and probe anneal fractions move linearly.

    ``s_system`` drives A_S and B; ``s_probe`` drives A_P only.  A leg with
    both endpoints equal is a hold (single frozen generator, no slicing).
    """

    s_system: tuple
    s_probe: tuple
    duration: float
    steps: int = 0

    def __post_init__(self):
        for pair in (self.s_system, self.s_probe):
            if not (0.0 <= pair[0] <= 1.0 and 0.0 <= pair[1] <= 1.0):
                raise ValueError("anneal fractions must lie in [0, 1]")
        if self.duration < 0:
            raise ValueError("leg duration must be non-negative")

    @property
    def is_hold(self) -> bool:
        return (self.s_system[0] == self.s_system[1]
                and self.s_probe[0] == self.s_probe[1])


def protocol_legs(s_star: float, s_P: float, tau1: float, steps: int = 0):
    """The four ramp legs around the hold: (into hold), (out of hold)."""
    legs_in = (AnnealLeg((1.0, s_star), (1.0, 1.0), tau1, steps),
               AnnealLeg((s_star, s_star), (1.0, s_P), tau1, steps))
    legs_out = (AnnealLeg((s_star, s_star), (s_P, 1.0), tau1, steps),
                AnnealLeg((s_star, 1.0), (1.0, 1.0), tau1, steps))
    return legs_in, legs_out


@dataclass(frozen=True)
class MEState:
    rho: np.ndarray          # m x m, Hermitian, trace = kept population <= 1
    frame: SpectralFrame
    t: float = 0.0

    @property
    def kept_population(self) -> float:
        return float(np.real(np.trace(self.rho)))

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.rho)).copy()


def default_truncation(problem: model.IsingProblem) -> int:
    """8 kept levels for small instances, 16 beyond two system qubits."""
    return min(problem.dim, 8 if problem.n_system <= 2 else 16)


def amplitudes_at(problem, schedule, s_system: float, s_probe: float):
    A_S, _, B = schedule.evaluate(s_system)
    _, A_P, _ = schedule.evaluate(s_probe)
    return A_S, A_P, B


def hamiltonian_at(problem, schedule, s_system: float, s_probe: float) -> np.ndarray:
    A_S, A_P, B = amplitudes_at(problem, schedule, s_system, s_probe)
    return model.build_hamiltonian(problem, A_S=A_S, A_P=A_P, B=B)


def all_ones_index(problem: model.IsingProblem) -> int:
    return problem.dim - 1


def initial_state(problem, schedule, m: int = None) -> MEState:
    """Protocol start: the all-ones computational state at s = 1.

    H(1) is diagonal, so the state must coincide with a kept eigenvector up
    to rounding; anything less means the truncation is too aggressive.
    """
    if m is None:
        m = default_truncation(problem)
    frame = eigendecompose(hamiltonian_at(problem, schedule, 1.0, 1.0), m, s=1.0)
    row = np.abs(frame.vectors[all_ones_index(problem), :])
    j = int(np.argmax(row))
    if row[j] ** 2 < 1.0 - 1e-9:
        raise MELeakError(row[j] ** 2, 0.0, 1.0, 1.0)
    rho = np.zeros((m, m), dtype=complex)
    rho[j, j] = 1.0
    return MEState(rho=rho, frame=frame, t=0.0)


def all_ones_probability(state: MEState) -> float:
    """<1...1| rho |1...1> in the computational basis, by frame rotation."""
    v = state.frame.vectors[state.frame.dim - 1, :]
    return float(np.real(v @ state.rho @ v.conj()))


# ---------------------------------------------------------------------------
# Slice-frozen generator


@dataclass(frozen=True)
class Generator:
    """Frozen-frame generator pieces, all in 1/us.

    ``R`` is the population rate matrix (gains off-diagonal, losses on the
    diagonal); ``decay`` and ``phase`` are the elementwise exponents of the
    coherence factor exp((-i*phase - decay) * dt).
    """

    R: np.ndarray
    decay: np.ndarray
    phase: np.ndarray


def _group_bohr(energies: np.ndarray, tol: float = BOHR_GROUP_TOL) -> np.ndarray:
    """All pairwise gaps E_a - E_b, clustered so near-ties share one value."""
    diff = energies[:, None] - energies[None, :]
    flat = diff.ravel()
    order = np.argsort(flat)
    svals = flat[order]
    grouped = np.empty_like(svals)
    start = 0
    n = len(svals)
    for i in range(1, n + 1):
        if i == n or svals[i] - svals[i - 1] > tol:
            grouped[start:i] = svals[start:i].mean()
            start = i
    out = np.empty_like(flat)
    out[order] = grouped
    return out.reshape(diff.shape)


def build_generator(frame: SpectralFrame, problem, bath: BathSpec,
                    lamb_table=None) -> Generator:
    """Dissipative rates, coherence decay, and dressed phases for one frame."""
    m = frame.m
    E = frame.energies
    if bath is None:
        zero = np.zeros((m, m))
        return Generator(R=zero, decay=zero,
                         phase=PHASE_SCALE * (E[:, None] - E[None, :]))
    if frame.dim != problem.dim:
        raise ValueError("frame dimension does not match the problem")
    omega = _group_bohr(E)                  # omega[a,b] = E_a - E_b
    G = gamma(omega, bath)                  # reduced kernel on every gap
    S = lamb_table(omega) if (lamb_table is not None and bath.lamb_shift) else None

    rate_in = np.zeros((m, m))              # rate_in[a,b] = rate(b -> a), 1/us
    shift = np.zeros(m)                     # Lamb-shift dressing, GHz
    V = frame.vectors
    nq = problem.n_qubits
    for bit in range(nq):
        w = bath.coupling_weight(bit == problem.n_system)
        z = model.sigma_z_values(nq, bit)
        Mz = V.conj().T @ (z[:, None] * V)
        M2 = np.abs(Mz) ** 2
        rate_in += (RATE_SCALE * w) * G.T * M2
        if S is not None:
            shift += w * (S * M2.T).sum(axis=1)

    K = rate_in.sum(axis=0)                 # total outflow per level, with dephasing
    R = rate_in.copy()
    np.fill_diagonal(R, np.diag(rate_in) - K)
    decay = 0.5 * (K[:, None] + K[None, :])
    np.fill_diagonal(decay, 0.0)
    dressed = E + shift
    phase = PHASE_SCALE * (dressed[:, None] - dressed[None, :])
    return Generator(R=R, decay=decay, phase=phase)


def _apply_generator(rho, gen: Generator, dt: float, method: str,
                     rtol: float, atol: float) -> np.ndarray:
    """Exact factorized action of the frozen generator over dt."""
    if dt == 0.0:
        return rho
    p = np.real(np.diag(rho)).copy()
    if np.any(gen.R):
        if method == "expm":
            p = expm(gen.R * dt) @ p
        elif method == "rk45":
            sol = solve_ivp(lambda _, y: gen.R @ y, (0.0, dt), p,
                            method="RK45", rtol=rtol, atol=atol)
            if not sol.success:
                raise RuntimeError(f"population integration failed: {sol.message}")
            p = sol.y[:, -1]
        else:
            raise ValueError(f"unknown method {method!r}")
    out = rho * np.exp((-1j * gen.phase - gen.decay) * dt)
    np.fill_diagonal(out, p)
    return out


def _apply_generator_adjoint(mop, gen: Generator, dt: float) -> np.ndarray:
    """Heisenberg-picture action on a measurement operator (expm route)."""
    if dt == 0.0:
        return mop
    q = np.real(np.diag(mop)).copy()
    if np.any(gen.R):
        q = expm(gen.R * dt).T @ q
    out = mop * np.exp((1j * gen.phase - gen.decay) * dt)
    np.fill_diagonal(out, q)
    return out


# ---------------------------------------------------------------------------
# Leg slicing


def _leg_steps(leg: AnnealLeg, steps_per_unit: float = None) -> int:
    if leg.steps:
        return int(leg.steps)
    per_unit = STEPS_PER_UNIT_S if steps_per_unit is None else steps_per_unit
    ds = max(abs(leg.s_system[1] - leg.s_system[0]),
             abs(leg.s_probe[1] - leg.s_probe[0]))
    return max(MIN_LEG_STEPS, int(math.ceil(ds * per_unit)))


def _lerp(pair, u: float) -> float:
    return pair[0] + (pair[1] - pair[0]) * u


def _leg_ops(frame_start, leg: AnnealLeg, problem, schedule, bath,
             lamb_table, steps_per_unit=None):
    """Yield the Strang-ordered op stream for one leg.

    Ops are ("gen", generator, dt) and ("rot", W, new_frame, s_system,
    s_probe); a hold emits a single generator op.
    """
    if leg.is_hold:
        if leg.duration > 0.0:
            gen = build_generator(frame_start, problem, bath, lamb_table)
            yield ("gen", gen, leg.duration)
        return
    n = _leg_steps(leg, steps_per_unit)
    dt = leg.duration / n
    frame = frame_start
    gen = build_generator(frame, problem, bath, lamb_table)
    yield ("gen", gen, 0.5 * dt)
    m = frame.m
    for k in range(1, n + 1):
        u = k / n
        s_sys = _lerp(leg.s_system, u)
        s_pr = _lerp(leg.s_probe, u)
        raw = eigendecompose(hamiltonian_at(problem, schedule, s_sys, s_pr),
                             m, s=s_sys)
        new = track_eigenbasis(frame, raw)
        W = new.vectors.conj().T @ frame.vectors
        yield ("rot", W, new, s_sys, s_pr)
        gen = build_generator(new, problem, bath, lamb_table)
        yield ("gen", gen, dt if k < n else 0.5 * dt)
        frame = new


def evolve(state: MEState, leg: AnnealLeg, problem, schedule, bath,
           *, lamb_table=None, method: str = "rk45", rtol: float = 1e-8,
           atol: float = 1e-10, steps_per_unit=None) -> MEState:
    """Propagate one leg; raises MELeakError if kept population drops."""
    rho = state.rho
    frame = state.frame
    for op in _leg_ops(frame, leg, problem, schedule, bath, lamb_table,
                       steps_per_unit):
        if op[0] == "gen":
            rho = _apply_generator(rho, op[1], op[2], method, rtol, atol)
        else:
            _, W, frame, s_sys, s_pr = op
            rho = W @ rho @ W.conj().T
            kept = float(np.real(np.trace(rho)))
            if kept < 1.0 - LEAK_TOL:
                raise MELeakError(kept, state.t, s_sys, s_pr)
    return MEState(rho=rho, frame=frame, t=state.t + leg.duration)


def hold_leg(s_star: float, s_P: float, tau: float) -> AnnealLeg:
    return AnnealLeg((s_star, s_star), (s_P, s_P), tau)


def run_protocol(problem, schedule, bath, *, s_star: float, s_P: float,
                 tau1: float, tau: float, h_P: float = None, m: int = None,
                 method: str = "expm", lamb_table=None, steps: int = 0,
                 steps_per_unit=None) -> float:
    """Five-leg protocol for one (h_P, tau) point; returns P(all-ones)."""
    if h_P is not None:
        problem = problem.with_h_P(h_P)
    if lamb_table is None:
        lamb_table = auto_lamb_table(problem, schedule, bath)
    state = initial_state(problem, schedule, m)
    legs_in, legs_out = protocol_legs(s_star, s_P, tau1, steps)
    for leg in legs_in + (hold_leg(s_star, s_P, tau),) + legs_out:
        state = evolve(state, leg, problem, schedule, bath,
                       lamb_table=lamb_table, method=method,
                       steps_per_unit=steps_per_unit)
    return all_ones_probability(state)


def auto_lamb_table(problem, schedule, bath):
    """Shared Lamb-shift table covering every Bohr gap the protocol visits.

    The spectral spread is largest at s = 1; the range is rounded up to a
    25-GHz multiple so the memoized table is reused across h_P steps.
    """
    if bath is None or not bath.lamb_shift:
        return None
    diag = schedule.evaluate(1.0)[2] * model.ising_diagonal(problem)
    spread = float(diag.max() - diag.min())
    omega_max = 25.0 * math.ceil((1.1 * spread + 5.0) / 25.0)
    return lamb_shift_table(bath, omega_max=omega_max)


# ---------------------------------------------------------------------------
# Probe-bias scan fast path


def probe_bias_scan(problem, schedule, bath, *, s_star: float, s_P: float,
                    tau1: float, tau_grid, h_P_grid, m: int = None,
                    steps: int = 0, steps_per_unit=None) -> np.ndarray:
    """P(all-ones) on the h_P x tau grid via one leg chain per h_P.

    The incoming legs are propagated once, the hold is swept over tau with
    the frozen generator, and the outgoing legs act on the measurement
    projector in the Heisenberg picture, so extra hold times cost O(m^2)
    each.  A forward pass at the largest tau re-checks the leak monitor and
    cross-validates the adjoint route.
    """
    taus = np.asarray(tau_grid, dtype=float)
    h_Ps = np.asarray(h_P_grid, dtype=float)
    if m is None:
        m = default_truncation(problem)
    # size the shared table for the widest bias the scan will visit
    h_big = float(h_Ps[np.argmax(np.abs(h_Ps))])
    lamb_table = auto_lamb_table(problem.with_h_P(h_big), schedule, bath)
    out = np.empty((len(h_Ps), len(taus)))
    order = np.argsort(taus)

    for i, h_P in enumerate(h_Ps):
        prob = problem.with_h_P(float(h_P))
        state = initial_state(prob, schedule, m)
        legs_in, legs_out = protocol_legs(s_star, s_P, tau1, steps)
        for leg in legs_in:
            state = evolve(state, leg, prob, schedule, bath,
                           lamb_table=lamb_table, method="expm",
                           steps_per_unit=steps_per_unit)
        gen_hold = build_generator(state.frame, prob, bath, lamb_table)

        ops = []
        frame = state.frame
        for leg in legs_out:
            for op in _leg_ops(frame, leg, prob, schedule, bath, lamb_table,
                               steps_per_unit):
                ops.append(op)
                if op[0] == "rot":
                    frame = op[2]
        v = frame.vectors[all_ones_index(prob), :]
        meas = np.outer(v.conj(), v)
        for op in reversed(ops):
            if op[0] == "gen":
                meas = _apply_generator_adjoint(meas, op[1], op[2])
            else:
                W = op[1]
                meas = W.conj().T @ meas @ W

        rho = state.rho
        elapsed = 0.0
        rho_last = rho
        for j in order:
            rho_last = _apply_generator(rho_last, gen_hold, taus[j] - elapsed,
                                        "expm", 0.0, 0.0)
            elapsed = taus[j]
            out[i, j] = float(np.real(np.vdot(meas, rho_last)))

        # forward leak check + adjoint cross-validation at the longest hold
        rho_fwd = rho_last
        for op in ops:
            if op[0] == "gen":
                rho_fwd = _apply_generator(rho_fwd, op[1], op[2], "expm", 0.0, 0.0)
            else:
                _, W, frm, s_sys, s_pr = op
                rho_fwd = W @ rho_fwd @ W.conj().T
                kept = float(np.real(np.trace(rho_fwd)))
                if kept < 1.0 - LEAK_TOL:
                    raise MELeakError(kept, elapsed, s_sys, s_pr)
        p_fwd = float(np.real(frame.vectors[all_ones_index(prob), :]
                              @ rho_fwd @ frame.vectors[all_ones_index(prob), :].conj()))
        if abs(p_fwd - out[i, order[-1]]) > 1e-7:
            raise RuntimeError(
                f"adjoint/forward mismatch {abs(p_fwd - out[i, order[-1]]):.2e} "
                f"at h_P={h_P:g}")
    return out
