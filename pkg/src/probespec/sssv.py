"""Classical rotor Monte Carlo with the sigma^x -> sin(theta),
sigma^z -> cos(theta) substitution.

Each qubit is an O(2) rotor with angle in [0, pi].  Proposals are uniform
over the full range and independent of the current state, so the Metropolis
acceptance rule alone gives detailed balance.  Endpoint readout projects
theta <= pi/2 to bit 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .model import IsingProblem
from .sqa import _chain_seeds, _ising_arrays, _next_double

ROTOR_SWEEPS_PER_LEG = 5


@dataclass(frozen=True)
class RotorConfig:
    """theta[site] in [0, pi], probe last."""

    theta: np.ndarray

    def __post_init__(self):
        theta = np.ascontiguousarray(self.theta, dtype=float)
        if theta.ndim != 1 or theta.size < 1:
            raise ValueError("theta must be a 1-D angle array")
        if np.any(theta < 0.0) or np.any(theta > math.pi):
            raise ValueError("angles must lie in [0, pi]")
        object.__setattr__(self, "theta", theta)

    @property
    def n_sites(self) -> int:
        return self.theta.size


def rotor_energy(config: RotorConfig, problem: IsingProblem,
                 A_S: float, A_P: float, B: float) -> float:
    """-A_S sum_i sin(theta_i) - A_P sin(theta_P) + B H_Ising(cos(theta))."""
    if config.n_sites != problem.n_qubits:
        raise ValueError("configuration size does not match problem")
    amps = problem.amplitudes(A_S, A_P)
    c = np.cos(config.theta)
    h, J = _ising_arrays(problem)
    ising = h @ c + 0.5 * c @ J @ c
    return float(-amps @ np.sin(config.theta) + B * ising)


def project(config: RotorConfig) -> np.ndarray:
    """theta <= pi/2 -> bit 0 (sigma^z = +1); theta > pi/2 -> bit 1."""
    return (config.theta > math.pi / 2).astype(np.uint8)


def sweep(config: RotorConfig, problem: IsingProblem, A_S: float, A_P: float,
          B: float, beta: float, rng: np.random.Generator, *,
          collect_delta: bool = False):
    """One Metropolis pass in fixed site order with uniform [0, pi]
    proposals.  Returns the new configuration, or (config, delta)."""
    if config.n_sites != problem.n_qubits:
        raise ValueError("configuration size does not match problem")
    amps = problem.amplitudes(A_S, A_P)
    h, J = _ising_arrays(problem)
    theta = config.theta.copy()
    c = np.cos(theta)
    delta = 0.0
    for i in range(theta.size):
        new = rng.random() * math.pi
        field = h[i] + J[i] @ c - J[i, i] * c[i]
        dE = (-amps[i] * (math.sin(new) - math.sin(theta[i]))
              + B * field * (math.cos(new) - c[i]))
        d = beta * dE
        if d <= 0.0 or rng.random() < math.exp(-d):
            theta[i] = new
            c[i] = math.cos(new)
            delta += dE
    out = RotorConfig(theta=theta)
    if collect_delta:
        return out, delta
    return out


@njit(cache=True)
def _run_rotor_chains(seeds, init_theta, random_init, A_table, B_table,
                      h, J, beta, hist):
    n_sweeps, n_sites = A_table.shape
    half_pi = math.pi / 2
    for r in range(seeds.shape[0]):
        state = seeds[r]
        theta = np.empty(n_sites)
        cos_t = np.empty(n_sites)
        sin_t = np.empty(n_sites)
        for i in range(n_sites):
            if random_init:
                u, state = _next_double(state)
                theta[i] = u * math.pi
            else:
                theta[i] = init_theta[i]
            cos_t[i] = math.cos(theta[i])
            sin_t[i] = math.sin(theta[i])
        for sw in range(n_sweeps):
            B = B_table[sw]
            for i in range(n_sites):
                u, state = _next_double(state)
                new = u * math.pi
                field = h[i]
                for j in range(n_sites):
                    if j != i:
                        field += J[i, j] * cos_t[j]
                cos_new = math.cos(new)
                sin_new = math.sin(new)
                d = beta * (-A_table[sw, i] * (sin_new - sin_t[i])
                            + B * field * (cos_new - cos_t[i]))
                if d > 0.0:
                    u, state = _next_double(state)
                    if u >= math.exp(-d):
                        continue
                theta[i] = new
                cos_t[i] = cos_new
                sin_t[i] = sin_new
        idx = 0
        for i in range(n_sites):
            if theta[i] > half_pi:
                idx |= 1 << i
        hist[idx] += 1


def run_chains(problem: IsingProblem, A_table: np.ndarray, B_table: np.ndarray,
               beta: float, *, repetitions: int, seed=None,
               init_theta=None) -> np.ndarray:
    """Histogram of projected endpoints over independent rotor chains.

    A_table has one row of per-qubit transverse amplitudes per sweep.
    init_theta = None starts each chain uniformly at random; an angle
    array starts every chain from that configuration.
    """
    A_table = np.ascontiguousarray(A_table, dtype=float)
    B_table = np.ascontiguousarray(B_table, dtype=float)
    if A_table.ndim != 2 or A_table.shape[1] != problem.n_qubits:
        raise ValueError("A_table must be (n_sweeps, n_qubits)")
    if B_table.shape != (A_table.shape[0],):
        raise ValueError("B_table must match A_table sweep count")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if init_theta is None:
        init = np.zeros(problem.n_qubits)
        random_init = True
    else:
        init = RotorConfig(theta=init_theta).theta
        if init.size != problem.n_qubits:
            raise ValueError("init_theta must have one angle per qubit")
        random_init = False
    h, J = _ising_arrays(problem)
    hist = np.zeros(problem.dim, dtype=np.int64)
    seeds = _chain_seeds(seed, repetitions)
    _run_rotor_chains(seeds, init, random_init, A_table, B_table, h, J,
                      float(beta), hist)
    return hist
