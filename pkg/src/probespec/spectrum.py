"""Truncated eigendecomposition with smooth gauge tracking, and Gibbs states.

The master-equation solver re-diagonalizes H(s) as the anneal fraction moves
and needs the kept eigenbasis to vary smoothly: eigensolvers return arbitrary
column order within degeneracies and arbitrary signs.  ``track_eigenbasis``
aligns a freshly computed frame against the previous one by overlap, which is
the standard greedy continuation gauge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

HERMITICITY_RTOL = 1e-9
RESIDUAL_RTOL = 1e-9
DEGENERACY_TOL = 1e-9      # GHz; clusters tighter than this share a gauge rotation
AMBIGUITY_TOL = 1e-6       # overlap ties below this are flagged

MAX_DENSE_DIM = 4096


class EigensolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectralFrame:
    """Lowest-m eigenpairs of a Hamiltonian snapshot.

    ``vectors`` is dim x m with columns in the order of ``energies``.  After
    gauge tracking the order follows continuity rather than strict energy
    sort, so ``energies`` may locally deviate from ascending across an exact
    crossing.  ``permutation``/``signs``/``ambiguous`` record what tracking
    did relative to the raw solver output.
    """

    energies: np.ndarray
    vectors: np.ndarray
    s: float = None
    permutation: tuple = None
    signs: tuple = None
    ambiguous: bool = False

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        v = np.asarray(self.vectors)
        if v.ndim != 2 or v.shape[1] != e.shape[0]:
            raise ValueError("vectors must be dim x m matching energies")
        e.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "vectors", v)

    @property
    def m(self) -> int:
        return len(self.energies)

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]


def eigendecompose(H: np.ndarray, m: int = None, s: float = None) -> SpectralFrame:
    """Lowest-m eigenpairs of a dense Hermitian matrix.

    Residuals are checked against ``RESIDUAL_RTOL * ||H||``; the sign gauge is
    fixed by making the largest-magnitude component of each vector positive,
    so repeated calls are bit-stable.
    """
    H = np.asarray(H)
    dim = H.shape[0]
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("H must be square")
    if dim > MAX_DENSE_DIM:
        raise EigensolverError(f"dimension {dim} exceeds dense limit {MAX_DENSE_DIM}")
    hnorm = np.linalg.norm(H)
    if hnorm > 0 and np.linalg.norm(H - H.conj().T) > HERMITICITY_RTOL * hnorm:
        raise EigensolverError("matrix is not Hermitian within tolerance")
    if m is None:
        m = dim
    if not (1 <= m <= dim):
        raise ValueError(f"truncation m={m} outside [1, {dim}]")
    if m == dim:
        energies, vectors = np.linalg.eigh(H)
    else:
        energies, vectors = scipy.linalg.eigh(H, subset_by_index=[0, m - 1])
    # deterministic sign gauge
    lead = np.argmax(np.abs(vectors), axis=0)
    flip = vectors[lead, np.arange(vectors.shape[1])].real < 0
    vectors[:, flip] *= -1.0
    resid = np.linalg.norm(H @ vectors - vectors * energies, axis=0)
    scale = max(hnorm, 1.0)
    if np.any(resid > RESIDUAL_RTOL * scale):
        raise EigensolverError(
            f"eigenpair residual {resid.max():.3e} exceeds {RESIDUAL_RTOL * scale:.3e}")
    return SpectralFrame(energies=energies, vectors=vectors, s=s)


def track_eigenbasis(prev: SpectralFrame, cur: SpectralFrame) -> SpectralFrame:
    """Align ``cur`` to the gauge of ``prev``.

    Columns are greedily matched on |overlap|, degenerate clusters (spacing
    below ``DEGENERACY_TOL``) get an orthogonal Procrustes rotation against
    the previous frame, and signs are fixed so <prev_k|cur_k> > 0.  A match
    whose best and second-best overlaps differ by less than ``AMBIGUITY_TOL``
    is resolved in favor of energy order and the frame is flagged.
    """
    if prev.m != cur.m or prev.dim != cur.dim:
        raise ValueError("frames must share dimensions")
    m = cur.m
    overlap = prev.vectors.conj().T @ cur.vectors
    mag = np.abs(overlap)
    perm = np.full(m, -1, dtype=int)
    taken = np.zeros(m, dtype=bool)
    ambiguous = False
    for k in range(m):
        row = np.where(taken, -1.0, mag[k])
        order = np.argsort(-row)
        best, second = order[0], (order[1] if m > 1 else None)
        if second is not None and row[best] - row[second] < AMBIGUITY_TOL:
            ambiguous = True
            # near-tie: fall back to energy order among the tied candidates
            tied = [j for j in order if row[best] - row[j] < AMBIGUITY_TOL and not taken[j]]
            best = min(tied)
        perm[k] = best
        taken[best] = True

    energies = cur.energies[perm]
    vectors = cur.vectors[:, perm].copy()

    # shared rotation inside degenerate clusters
    start = 0
    for end in range(1, m + 1):
        if end == m or abs(energies[end] - energies[end - 1]) > DEGENERACY_TOL:
            if end - start > 1:
                block = vectors[:, start:end]
                target = prev.vectors[:, start:end]
                u, _, vt = np.linalg.svd(block.conj().T @ target)
                vectors[:, start:end] = block @ (u @ vt)
            start = end

    signs = np.ones(m)
    diag = np.einsum("ik,ik->k", prev.vectors.conj(), vectors).real
    signs[diag < 0] = -1.0
    vectors *= signs

    return SpectralFrame(energies=energies, vectors=vectors, s=cur.s,
                         permutation=tuple(int(p) for p in perm),
                         signs=tuple(float(x) for x in signs),
                         ambiguous=ambiguous)


# ---------------------------------------------------------------------------
# Gibbs states


def gibbs_populations(energies: np.ndarray, beta: float) -> np.ndarray:
    """Boltzmann weights exp(-beta E_n)/Z, computed with the max-shift trick.

    beta = 0 gives the uniform distribution; beta = inf puts equal weight on
    the degenerate ground set.
    """
    e = np.asarray(energies, dtype=float)
    if beta < 0:
        raise ValueError("beta must be non-negative")
    if np.isinf(beta):
        mask = np.abs(e - e.min()) < DEGENERACY_TOL
        return mask / mask.sum()
    w = np.exp(-beta * (e - e.min()))
    return w / w.sum()


@dataclass(frozen=True)
class DensityMatrix:
    """A validated density matrix tagged with its basis.

    basis 'computational' means the raw register basis; 'instantaneous-eigen'
    means the matrix lives in the kept eigenbasis of ``frame``.
    """

    matrix: np.ndarray
    basis: str = "computational"
    frame: SpectralFrame = None

    TRACE_TOL = 1e-8
    HERM_TOL = 1e-12
    EIG_FLOOR = -1e-9

    def __post_init__(self):
        rho = np.asarray(self.matrix, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError("density matrix must be square")
        if self.basis not in ("computational", "instantaneous-eigen"):
            raise ValueError(f"unknown basis {self.basis!r}")
        if self.basis == "instantaneous-eigen" and self.frame is None:
            raise ValueError("eigenbasis density matrix needs its frame")
        scale = max(1.0, np.abs(rho).max())
        if np.abs(rho - rho.conj().T).max() > self.HERM_TOL * scale:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > self.TRACE_TOL:
            raise ValueError(f"trace {np.trace(rho).real!r} deviates from 1")
        if np.linalg.eigvalsh(rho).min() < self.EIG_FLOOR:
            raise ValueError("density matrix has a significantly negative eigenvalue")
        rho.flags.writeable = False
        object.__setattr__(self, "matrix", rho)

    def populations(self) -> np.ndarray:
        return np.diag(self.matrix).real.copy()


def gibbs_density(H: np.ndarray, beta: float, basis: str = "computational") -> DensityMatrix:
    """Thermal state exp(-beta H)/Z of a dense Hermitian H."""
    frame = eigendecompose(H)
    p = gibbs_populations(frame.energies, beta)
    if basis == "computational":
        rho = (frame.vectors * p) @ frame.vectors.conj().T
        rho = 0.5 * (rho + rho.conj().T)
        return DensityMatrix(matrix=rho, basis="computational")
    if basis == "instantaneous-eigen":
        return DensityMatrix(matrix=np.diag(p.astype(complex)),
                             basis="instantaneous-eigen", frame=frame)
    raise ValueError(f"unknown basis {basis!r}")
