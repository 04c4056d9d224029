"""Discrete-time path-integral Monte Carlo on worldline configurations.

The transverse-field model on ``n_qubits`` sites is mapped to a classical
action over ``n_tau`` periodic Trotter slices: the Ising energy of each slice
enters with weight ``beta * B / n_tau`` and neighbouring slices of the same
site are coupled ferromagnetically with strength ``j_perp(A_i)``.  Sampling
is single-site Metropolis in a fixed scan order (site-major, slice-minor),
so runs are reproducible given a seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .model import IsingProblem

SQA_DEFAULT_N_TAU = 128

READOUT_MODES = ("slice", "vote")


def j_perp(A: float, beta: float, n_tau: int) -> float:
    """Trotter-direction coupling -0.5*ln(tanh(beta*A/n_tau)).

    A = 0 returns +inf: the worldline is rigid and single-slice moves that
    break alignment are always rejected.
    """
    if A < 0.0:
        raise ValueError("transverse amplitude must be >= 0")
    if beta < 0.0:
        raise ValueError("beta must be >= 0")
    if n_tau < 1:
        raise ValueError("n_tau must be >= 1")
    t = math.tanh(beta * A / n_tau)
    if t == 0.0:
        return math.inf
    return -0.5 * math.log(t)


@dataclass(frozen=True)
class WorldlineConfig:
    """spins[site, slice] in {-1, +1}, periodic along the slice axis."""

    spins: np.ndarray
    beta: float

    def __post_init__(self):
        spins = np.ascontiguousarray(self.spins, dtype=np.int8)
        if spins.ndim != 2 or spins.shape[0] < 1 or spins.shape[1] < 1:
            raise ValueError("spins must be a (n_sites, n_tau) array")
        if not np.all(np.abs(spins) == 1):
            raise ValueError("worldline entries must be +1 or -1")
        if self.beta < 0.0:
            raise ValueError("beta must be >= 0")
        object.__setattr__(self, "spins", spins)

    @property
    def n_sites(self) -> int:
        return self.spins.shape[0]

    @property
    def n_tau(self) -> int:
        return self.spins.shape[1]


def worldline_from_bits(bits, n_tau: int, beta: float) -> WorldlineConfig:
    """Constant worldline from a bit pattern (bit 0 -> spin +1)."""
    bits = np.asarray(bits, dtype=np.int64)
    spins = np.repeat((1 - 2 * bits)[:, None], n_tau, axis=1)
    return WorldlineConfig(spins=spins.astype(np.int8), beta=beta)


def random_worldline(n_sites: int, n_tau: int, beta: float,
                     rng: np.random.Generator) -> WorldlineConfig:
    spins = rng.integers(0, 2, size=(n_sites, n_tau)).astype(np.int8)
    return WorldlineConfig(spins=2 * spins - 1, beta=beta)


def _ising_arrays(problem: IsingProblem):
    h = problem.full_fields()
    J = np.zeros((problem.n_qubits, problem.n_qubits))
    for (bi, bj, v) in problem.full_couplings():
        J[bi, bj] += v
        J[bj, bi] += v
    return h, J


def _neighbour_lists(J: np.ndarray):
    n = J.shape[0]
    deg = np.zeros(n, dtype=np.int64)
    nbr = np.zeros((n, max(1, n - 1)), dtype=np.int64)
    for i in range(n):
        js = np.nonzero(J[i])[0]
        deg[i] = js.size
        nbr[i, :js.size] = js
    return nbr, deg


def _jperp_array(A, beta: float, n_sites: int, n_tau: int) -> np.ndarray:
    A = np.broadcast_to(np.asarray(A, dtype=float), (n_sites,))
    return np.array([j_perp(a, beta, n_tau) for a in A])


def action(config: WorldlineConfig, problem: IsingProblem, A, B: float) -> float:
    """Dimensionless action of the worldline (the Metropolis weight is e^-S).

    Slice Ising energies carry weight beta*B/n_tau; every periodic slice
    bond of site i contributes -j_perp_i * mu_tau * mu_tau+1.
    """
    h, J = _ising_arrays(problem)
    spins = config.spins.astype(float)
    bB = config.beta * B / config.n_tau
    slice_energy = h @ spins + 0.5 * np.einsum("it,ij,jt->t", spins, J, spins)
    s = bB * slice_energy.sum()
    jper = _jperp_array(A, config.beta, config.n_sites, config.n_tau)
    bonds = (spins * np.roll(spins, -1, axis=1)).sum(axis=1)
    return float(s - jper @ bonds)


# SplitMix64: one 64-bit counter stream per chain, ~7 integer ops per draw.
_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_MUL2 = np.uint64(0x94D049BB133111EB)
_SM_INV53 = 1.1102230246251565e-16  # 2**-53


@njit(cache=True, inline="always")
def _next_u64(state):
    state = state + _SM_GAMMA
    z = state
    z = (z ^ (z >> np.uint64(30))) * _SM_MUL1
    z = (z ^ (z >> np.uint64(27))) * _SM_MUL2
    return z ^ (z >> np.uint64(31)), state


@njit(cache=True, inline="always")
def _next_double(state):
    z, state = _next_u64(state)
    return (z >> np.uint64(11)) * _SM_INV53, state


@njit(cache=True, inline="always")
def _site_delta(spins, i, tau, h, J, jperp, bB, n_sites, n_tau):
    mu = spins[i, tau]
    field = h[i]
    for j in range(n_sites):
        if j != i:
            field += J[i, j] * spins[j, tau]
    d = bB * (-2.0 * mu * field)
    if n_tau > 1:
        # alignment sum first: keeps j_perp = inf from producing inf*0
        a = mu * (spins[i, (tau - 1) % n_tau] + spins[i, (tau + 1) % n_tau])
        if jperp[i] == np.inf:
            if a > 0:
                return np.inf
            if a < 0:
                return -np.inf
        else:
            d += 2.0 * jperp[i] * a
    return d


@njit(cache=True)
def _sweep_inplace(spins, h, J, jperp, bB, u):
    n_sites, n_tau = spins.shape
    delta = 0.0
    k = 0
    for i in range(n_sites):
        for tau in range(n_tau):
            d = _site_delta(spins, i, tau, h, J, jperp, bB, n_sites, n_tau)
            if d <= 0.0 or u[k] < math.exp(-d):
                spins[i, tau] = -spins[i, tau]
                delta += d
            k += 1
    return delta


@njit(cache=True)
def _acceptance_tables(A_row, B, h, J, nbr, deg, beta, n_tau, acc):
    """acc[i, spin_idx, neighbour_pattern, alignment_idx] = min(1, e^-delta).

    Same local delta as _site_delta, with the exponential amortized over the
    n_tau slice visits of a sweep.  alignment_idx encodes mu*(mu_l + mu_r)
    in {-2, 0, +2} as {0, 1, 2}; pattern bit k is set when neighbour k is up.
    """
    n_sites = deg.shape[0]
    bB = beta * B / n_tau
    for i in range(n_sites):
        t = math.tanh(beta * A_row[i] / n_tau)
        jp = np.inf if t == 0.0 else -0.5 * math.log(t)
        for p in range(1 << deg[i]):
            field = h[i]
            for k in range(deg[i]):
                mu_k = 1.0 if (p >> k) & 1 else -1.0
                field += J[i, nbr[i, k]] * mu_k
            for si in range(2):
                mu = 2.0 * si - 1.0
                base = bB * (-2.0 * mu * field)
                for ai in range(3):
                    a = 2.0 * (ai - 1)
                    if jp == np.inf and a != 0.0:
                        acc[i, si, p, ai] = 1.0 if a < 0.0 else 0.0
                        continue
                    d = base if a == 0.0 else base + 2.0 * jp * a
                    acc[i, si, p, ai] = 1.0 if d <= 0.0 else math.exp(-d)


@njit(cache=True)
def _run_chains(seeds, init_spins, random_init, A_table, B_table, h, J,
                nbr, deg, beta, n_tau, vote, hist):
    n_sweeps, n_sites = A_table.shape
    max_deg = 0
    for i in range(n_sites):
        if deg[i] > max_deg:
            max_deg = deg[i]
    acc = np.empty((n_sites, 2, 1 << max_deg, 3))
    _acceptance_tables(A_table[0], B_table[0], h, J, nbr, deg, beta,
                       n_tau, acc)
    table_sweep = 0
    for r in range(seeds.shape[0]):
        state = seeds[r]
        spins = np.empty((n_sites, n_tau), dtype=np.int8)
        for i in range(n_sites):
            for t in range(n_tau):
                if random_init:
                    z, state = _next_u64(state)
                    spins[i, t] = 1 if z & np.uint64(1) else -1
                else:
                    spins[i, t] = init_spins[i]
        for sw in range(n_sweeps):
            if sw != table_sweep:
                same = (A_table[sw, 0] == A_table[table_sweep, 0]
                        and B_table[sw] == B_table[table_sweep])
                for i in range(1, n_sites):
                    same = same and A_table[sw, i] == A_table[table_sweep, i]
                if not same:
                    _acceptance_tables(A_table[sw], B_table[sw], h, J, nbr,
                                       deg, beta, n_tau, acc)
                table_sweep = sw
            for i in range(n_sites):
                d_i = deg[i]
                for tau in range(n_tau):
                    mu = spins[i, tau]
                    p = 0
                    for k in range(d_i):
                        if spins[nbr[i, k], tau] > 0:
                            p |= 1 << k
                    if n_tau > 1:
                        tm = tau - 1 if tau > 0 else n_tau - 1
                        tp = tau + 1 if tau + 1 < n_tau else 0
                        ai = (mu * (spins[i, tm] + spins[i, tp]) + 2) >> 1
                    else:
                        ai = 1
                    a = acc[i, (mu + 1) >> 1, p, ai]
                    if a < 1.0:
                        u, state = _next_double(state)
                        if u >= a:
                            continue
                    spins[i, tau] = -mu
        idx = 0
        if vote:
            for i in range(n_sites):
                cnt = 0
                for t in range(n_tau):
                    if spins[i, t] < 0:
                        cnt += 1
                if 2 * cnt > n_tau:
                    idx |= 1 << i
                elif 2 * cnt == n_tau:
                    z, state = _next_u64(state)
                    if z & np.uint64(1):
                        idx |= 1 << i
        else:
            z, state = _next_u64(state)
            t = int(z % np.uint64(n_tau))
            for i in range(n_sites):
                if spins[i, t] < 0:
                    idx |= 1 << i
        hist[idx] += 1


def sweep(config: WorldlineConfig, problem: IsingProblem, A, B: float,
          rng: np.random.Generator, *, collect_delta: bool = False):
    """One Metropolis pass over every (site, slice) in fixed scan order.

    A may be a scalar or a per-qubit array (probe last).  Returns the new
    configuration, or (config, accumulated delta) with collect_delta.
    """
    h, J = _ising_arrays(problem)
    jper = _jperp_array(A, config.beta, config.n_sites, config.n_tau)
    bB = config.beta * B / config.n_tau
    spins = config.spins.copy()
    u = rng.random(config.n_sites * config.n_tau)
    delta = _sweep_inplace(spins, h, J, jper, bB, u)
    out = WorldlineConfig(spins=spins, beta=config.beta)
    if collect_delta:
        return out, delta
    return out


def readout(config: WorldlineConfig, rng: np.random.Generator,
            mode: str = "slice") -> np.ndarray:
    """Project the worldline to bits (spin +1 -> bit 0).

    "slice" reads one uniformly random Trotter slice; "vote" takes the
    per-site majority, breaking exact ties by a fair coin.
    """
    if mode not in READOUT_MODES:
        raise ValueError(f"readout mode must be one of {READOUT_MODES}")
    if mode == "slice":
        t = int(rng.integers(config.n_tau))
        return (config.spins[:, t] < 0).astype(np.uint8)
    down = (config.spins < 0).sum(axis=1)
    bits = (2 * down > config.n_tau).astype(np.uint8)
    ties = 2 * down == config.n_tau
    if np.any(ties):
        bits[ties] = rng.integers(0, 2, size=int(ties.sum()))
    return bits


def bits_to_index(bits) -> int:
    """Pack a bit string into a computational-state index (site 0 = LSB)."""
    bits = np.asarray(bits, dtype=np.int64)
    return int((bits << np.arange(bits.size)).sum())


def _chain_seeds(seed, repetitions: int) -> np.ndarray:
    ss = np.random.SeedSequence(seed)
    return ss.generate_state(repetitions, dtype=np.uint64)


def run_chains(problem: IsingProblem, A_table: np.ndarray, B_table: np.ndarray,
               beta: float, *, repetitions: int, n_tau: int = SQA_DEFAULT_N_TAU,
               seed=None, readout_mode: str = "slice",
               init_bits=None) -> np.ndarray:
    """Histogram of end-of-schedule readouts over independent chains.

    A_table has one row of per-qubit transverse amplitudes per sweep and
    B_table one Ising scale per sweep.  init_bits = None starts each chain
    from an independent random worldline; a bit pattern starts it aligned.
    """
    if readout_mode not in READOUT_MODES:
        raise ValueError(f"readout mode must be one of {READOUT_MODES}")
    A_table = np.ascontiguousarray(A_table, dtype=float)
    B_table = np.ascontiguousarray(B_table, dtype=float)
    if A_table.ndim != 2 or A_table.shape[1] != problem.n_qubits:
        raise ValueError("A_table must be (n_sweeps, n_qubits)")
    if B_table.shape != (A_table.shape[0],):
        raise ValueError("B_table must match A_table sweep count")
    if np.any(A_table < 0.0):
        raise ValueError("transverse amplitudes must be >= 0")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    h, J = _ising_arrays(problem)
    if init_bits is None:
        init_spins = np.ones(problem.n_qubits, dtype=np.int8)
        random_init = True
    else:
        init_bits = np.asarray(init_bits, dtype=np.int64)
        if init_bits.shape != (problem.n_qubits,):
            raise ValueError("init_bits must have one bit per qubit")
        init_spins = (1 - 2 * init_bits).astype(np.int8)
        random_init = False
    hist = np.zeros(problem.dim, dtype=np.int64)
    seeds = _chain_seeds(seed, repetitions)
    nbr, deg = _neighbour_lists(J)
    _run_chains(seeds, init_spins, random_init, A_table, B_table, h, J,
                nbr, deg, float(beta), int(n_tau), readout_mode == "vote",
                hist)
    return hist


def thermal_hold(problem: IsingProblem, A, B: float, beta: float,
                 sweeps: int, repetitions: int, *,
                 n_tau: int = SQA_DEFAULT_N_TAU, seed=None,
                 readout_mode: str = "slice") -> np.ndarray:
    """Equilibrium histogram: independent random-start chains, fixed
    amplitudes, one readout per chain after `sweeps` sweeps."""
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    A_row = np.broadcast_to(np.asarray(A, dtype=float), (problem.n_qubits,))
    A_table = np.tile(A_row, (sweeps, 1))
    B_table = np.full(sweeps, float(B))
    return run_chains(problem, A_table, B_table, beta,
                      repetitions=repetitions, n_tau=n_tau, seed=seed,
                      readout_mode=readout_mode)
