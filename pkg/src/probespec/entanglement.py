"""Entanglement measures for small registers.

Negativity is read off the spectrum of the partial transpose; global
entanglement is its geometric mean over all distinct bipartitions.  A
witness operator is built from the most negative eigenvector of the
partially transposed ground-state projector, and its expectation over
diagonal ensembles with box-constrained populations is bounded by an
exact linear program (a simplex cut by a box has its optima on sorted
greedy allocations).  The robustness scan redraws the two-qubit Gibbs
state under Gaussian noise on every field and coupling and records the
negativity distribution.

Qubit labels are 1-based and follow the register convention of the model
module: label k lives at bit k - 1, the least significant bit first.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import model

NEG_CLAMP = 1e-12            # eigenvalue dust from the trace norm
WITNESS_EIG_TOL = 1e-12      # "no negative eigenvalue" cutoff
FEAS_TOL = 1e-9              # box/simplex feasibility slack
MAX_GLOBAL_QUBITS = 10       # 2^(n-1)-1 bipartitions; keep the walk sane
ROBUSTNESS_SIGMA = 0.1
ROBUSTNESS_SAMPLES = 10_000
HIST_BINS = 50

_SX = np.array([[0.0, 1.0], [1.0, 0.0]])
_SZ = np.array([[1.0, 0.0], [0.0, -1.0]])


# ---------------------------------------------------------------------------
# Bipartitions


@dataclass(frozen=True)
class Bipartition:
    """Nonempty proper subset of qubit labels; the complement is implied."""

    subset: tuple
    n_qubits: int

    def __post_init__(self):
        labels = tuple(sorted(self.subset))
        if len(labels) != len(set(labels)):
            raise ValueError("bipartition labels must be unique")
        if not labels or len(labels) >= self.n_qubits:
            raise ValueError("bipartition must be nonempty and proper")
        for q in labels:
            if not isinstance(q, (int, np.integer)) or not 1 <= q <= self.n_qubits:
                raise ValueError(f"label {q!r} outside 1..{self.n_qubits}")
        object.__setattr__(self, "subset", tuple(int(q) for q in labels))

    def complement(self) -> "Bipartition":
        rest = tuple(q for q in range(1, self.n_qubits + 1)
                     if q not in self.subset)
        return Bipartition(rest, self.n_qubits)


def _qubit_count(dim: int) -> int:
    n = int(round(math.log2(dim)))
    if 2 ** n != dim or n < 1:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def _subset_bits(A, n_qubits: int) -> tuple:
    """Normalize a Bipartition or iterable of 1-based labels to bit indices."""
    if isinstance(A, Bipartition):
        if A.n_qubits != n_qubits:
            raise ValueError(
                f"bipartition is over {A.n_qubits} qubits, state has {n_qubits}")
        labels = A.subset
    else:
        labels = Bipartition(tuple(A), n_qubits).subset
    return tuple(q - 1 for q in labels)


def _as_matrix(rho) -> np.ndarray:
    """Unwrap DensityMatrix-like inputs; reject non-register bases."""
    basis = getattr(rho, "basis", None)
    if basis is not None and basis != "computational":
        raise ValueError("partial transpose needs the computational basis")
    mat = np.asarray(getattr(rho, "matrix", rho))
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("state must be a square matrix")
    return mat


def _check_state(mat: np.ndarray) -> None:
    scale = max(1.0, float(np.abs(mat).max()))
    if np.abs(mat - mat.conj().T).max() > 1e-9 * scale:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(mat).real - 1.0) > 1e-8:
        raise ValueError("density matrix trace deviates from 1")


# ---------------------------------------------------------------------------
# Negativity


def partial_transpose(rho, A) -> np.ndarray:
    """Transpose the indices of the A-subsystem only.

    Accepts a plain matrix or a computational-basis DensityMatrix; ``A``
    is a Bipartition or an iterable of 1-based qubit labels.  The output
    is Hermitian whenever the input is.
    """
    mat = _as_matrix(rho)
    n = _qubit_count(mat.shape[0])
    bits = _subset_bits(A, n)
    t = mat.reshape((2,) * (2 * n))
    # register index r = sum_b bit_b 2^b, so bit b sits at row axis
    # n - 1 - b and column axis 2n - 1 - b of the reshaped tensor
    axes = list(range(2 * n))
    for b in bits:
        row = n - 1 - b
        axes[row], axes[n + row] = axes[n + row], axes[row]
    return t.transpose(axes).reshape(mat.shape)


def negativity(rho, A) -> float:
    """N = (||rho^PT||_1 - 1) / 2 over the bipartition A.

    The trace norm comes from a Hermitian eigendecomposition, exact at
    these dimensions.  A unit-trace input makes the value non-negative up
    to rounding, so results within NEG_CLAMP of zero clamp to zero.
    """
    mat = _as_matrix(rho)
    _check_state(mat)
    pt = partial_transpose(mat, A)
    lam = np.linalg.eigvalsh(0.5 * (pt + pt.conj().T))
    val = 0.5 * (float(np.abs(lam).sum()) - 1.0)
    return val if val > NEG_CLAMP else 0.0


def distinct_bipartitions(n_qubits: int) -> tuple:
    """All 2^(n-1) - 1 bipartitions, one per complement pair.

    Canonical form: the subset containing qubit 1.
    """
    if n_qubits < 2:
        raise ValueError("bipartitions need at least two qubits")
    out = []
    rest = list(range(2, n_qubits + 1))
    for mask in range(2 ** (n_qubits - 1)):
        subset = (1,) + tuple(q for k, q in enumerate(rest) if (mask >> k) & 1)
        if len(subset) < n_qubits:
            out.append(Bipartition(subset, n_qubits))
    return tuple(out)


def global_entanglement(rho) -> float:
    """Geometric mean of the negativity over all distinct bipartitions.

    Any separable cut zeroes the mean, which is the intended reading: the
    register is globally entangled only if every bipartition is.  Two
    qubits reduce to the single-bipartition negativity.
    """
    mat = _as_matrix(rho)
    n = _qubit_count(mat.shape[0])
    if n > MAX_GLOBAL_QUBITS:
        raise ValueError(f"global entanglement capped at {MAX_GLOBAL_QUBITS} qubits")
    values = [negativity(mat, A) for A in distinct_bipartitions(n)]
    if any(v == 0.0 for v in values):
        return 0.0
    return float(math.exp(np.mean(np.log(values))))


# ---------------------------------------------------------------------------
# Witness


def witness_construct(E0, A) -> np.ndarray:
    """Witness from a pure state: W = PT(|phi><phi|) over the same cut.

    |phi> is the eigenvector of PT(|E0><E0|) with the most negative
    eigenvalue; separable inputs have none and raise.  Tr[W sigma] >= 0
    for every state sigma separable across A, while Tr[W rho] < 0
    certifies entanglement.
    """
    psi = np.asarray(E0, dtype=complex).ravel()
    norm = float(np.linalg.norm(psi))
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"state vector norm {norm!r} deviates from 1")
    n = _qubit_count(psi.size)
    bits = _subset_bits(A, n)
    pt = partial_transpose(np.outer(psi, psi.conj()), A)
    lam, vec = np.linalg.eigh(0.5 * (pt + pt.conj().T))
    if lam[0] >= -WITNESS_EIG_TOL:
        labels = tuple(b + 1 for b in bits)
        raise ValueError(f"state is not entangled across {labels}")
    phi = vec[:, 0]
    W = partial_transpose(np.outer(phi, phi.conj()), A)
    return 0.5 * (W + W.conj().T)


def witness_bound_diagonal(W, eigenstates, P, dP) -> tuple:
    """(min, max) of Tr[W rho] over diagonal ensembles of the eigenstates.

    rho = sum_i p_i |E_i><E_i| with p_i in [P_i - dP_i, P_i + dP_i]
    clipped to [0, 1] and sum p_i = 1.  The optimum of a linear functional
    over that polytope is found by greedy allocation in coefficient
    order, which is exact here.  A negative maximum certifies
    entanglement for every ensemble consistent with the populations.
    """
    states = np.asarray(eigenstates, dtype=complex)
    if states.ndim != 2:
        raise ValueError("eigenstates must be a (dim, k) column matrix")
    P = np.asarray(P, dtype=float)
    dP = np.asarray(dP, dtype=float)
    k = states.shape[1]
    if P.shape != (k,) or dP.shape != (k,):
        raise ValueError("populations and uncertainties must match the states")
    if np.any(P < 0.0) or np.any(P > 1.0) or np.any(dP < 0.0):
        raise ValueError("populations must lie in [0, 1] with dP >= 0")
    c = np.real(np.einsum("ik,ij,jk->k", states.conj(), np.asarray(W), states))
    lo = np.clip(P - dP, 0.0, 1.0)
    hi = np.clip(P + dP, 0.0, 1.0)
    if lo.sum() > 1.0 + FEAS_TOL or hi.sum() < 1.0 - FEAS_TOL:
        raise ValueError("population box does not intersect the simplex")

    def allocate(order):
        p = lo.copy()
        slack = 1.0 - lo.sum()
        for i in order:
            step = min(hi[i] - lo[i], slack)
            p[i] += step
            slack -= step
            if slack <= 0.0:
                break
        return float(c @ p)

    return allocate(np.argsort(c)), allocate(np.argsort(c)[::-1])


# ---------------------------------------------------------------------------
# Robustness of the Gibbs-state negativity


@dataclass(frozen=True)
class RobustnessResult:
    """Negativity distribution of the noisy Gibbs state.

    ``negativities`` keeps the per-sample values backing the histogram;
    ``counts``/``bin_edges`` follow numpy histogram conventions.
    """

    samples: int
    negativities: np.ndarray
    counts: np.ndarray
    bin_edges: np.ndarray
    min_negativity: float
    mean_negativity: float
    noiseless_negativity: float

    def __post_init__(self):
        if len(self.negativities) != self.samples:
            raise ValueError("sample values must match the sample count")
        if int(self.counts.sum()) != self.samples:
            raise ValueError("histogram mass must equal the sample count")
        if self.min_negativity < 0.0:
            raise ValueError("negativity is non-negative")


def _noise_term(A_energy: float, B_energy: float, alpha) -> np.ndarray:
    x1 = np.kron(np.eye(2), _SX)
    x2 = np.kron(_SX, np.eye(2))
    z1 = np.kron(np.eye(2), _SZ)
    z2 = np.kron(_SZ, np.eye(2))
    return (A_energy * (alpha[0] * x1 + alpha[1] * x2)
            + B_energy * (alpha[2] * z1 + alpha[3] * z2
                          + alpha[4] * z1 @ z2))


def _gibbs_negativity(H: np.ndarray, beta: float) -> float:
    w, V = np.linalg.eigh(H)
    p = np.exp(-beta * (w - w[0]))
    p /= p.sum()
    rho = (V * p) @ V.conj().T
    return negativity(0.5 * (rho + rho.conj().T), (1,))


def robustness_scan(problem, A_energy: float, B_energy: float, beta: float,
                    sigma: float = ROBUSTNESS_SIGMA,
                    samples: int = ROBUSTNESS_SAMPLES, *, seed=None,
                    bins: int = HIST_BINS) -> RobustnessResult:
    """Negativity of the two-qubit Gibbs state under field/coupling noise.

    Each sample draws five independent N(0, sigma) coefficients and adds
    A (a1 X1 + a2 X2) + B (a3 Z1 + a4 Z2 + a5 Z1 Z2) to the system
    Hamiltonian at the fixed energies; the Gibbs state at ``beta`` is
    rebuilt and its negativity recorded.  Samples are keyed by index, so
    the result is deterministic given the seed regardless of any
    parallel split.
    """
    if problem.n_system != 2:
        raise ValueError("robustness scan is defined for the 2-qubit system")
    if beta < 0.0 or sigma < 0.0:
        raise ValueError("beta and sigma must be non-negative")
    if samples < 1:
        raise ValueError("need at least one sample")
    base = model.build_system_hamiltonian(problem, A_energy, B_energy)
    noiseless = _gibbs_negativity(base, beta)
    alphas = np.random.default_rng(seed).normal(0.0, sigma, size=(samples, 5))
    values = np.empty(samples)
    for i in range(samples):
        values[i] = _gibbs_negativity(
            base + _noise_term(A_energy, B_energy, alphas[i]), beta)
    counts, edges = np.histogram(values, bins=bins)
    return RobustnessResult(samples=samples, negativities=values,
                            counts=counts, bin_edges=edges,
                            min_negativity=float(values.min()),
                            mean_negativity=float(values.mean()),
                            noiseless_negativity=noiseless)


def write_robustness_csv(path, result: RobustnessResult) -> None:
    """Histogram rows (bin_low, bin_high, count) plus a summary comment.

    The trailing line ``# min=... mean=... noiseless=...`` keeps the file
    a single self-describing artifact while staying loadable with any
    reader that honors ``#`` comments.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_low", "bin_high", "count"])
        for k in range(len(result.counts)):
            writer.writerow([f"{result.bin_edges[k]:.12g}",
                             f"{result.bin_edges[k + 1]:.12g}",
                             int(result.counts[k])])
        fh.write(f"# min={result.min_negativity:.12g} "
                 f"mean={result.mean_negativity:.12g} "
                 f"noiseless={result.noiseless_negativity:.12g}\n")
