"""Problem definitions, Hamiltonian builders, anneal schedules, and noise models.

Conventions used throughout the package:

* Energies are quoted in GHz (h = 1), temperatures in kelvin, and the
  conversion uses k_B/h = 20.836619 GHz/K.
* Computational basis: bit value 0 corresponds to sigma^z eigenvalue +1,
  bit value 1 to -1.  Qubit 1 occupies the least significant bit and the
  probe qubit the most significant bit.
* The time-dependent Hamiltonian is

      H = -A_S(s) sum_i sigma^x_i - A_P(s) sigma^x_P + B(s) (H_IS + H_1P),

  where H_IS is the programmed system Ising Hamiltonian and

      H_1P = J_1P sigma^z_1 sigma^z_P - J_1P sigma^z_1 - h_P sigma^z_P

  couples the probe to qubit 1.  The -J_1P offset on qubit 1 cancels the
  probe's back-action when the probe points up, so the probe-up sector
  reproduces the bare system spectrum shifted by -B h_P.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import PchipInterpolator

# k_B / h in GHz per kelvin.
KB_GHZ_PER_K = 20.836619

MAX_QUBITS = 12  # total (system + probe); dense solvers stop at 2^12

NOISE_KINDS = ("none", "ice-probe-only", "ice-all", "alpha-shift", "hamiltonian-gaussian")


@dataclass(frozen=True)
class PhysicalUnits:
    """Operating temperature and derived thermal quantities."""

    temperature_K: float = 0.0125

    def __post_init__(self):
        if self.temperature_K < 0:
            raise ValueError("temperature must be non-negative")

    @property
    def thermal_energy_GHz(self) -> float:
        return KB_GHZ_PER_K * self.temperature_K

    @property
    def beta(self) -> float:
        """Inverse temperature in 1/GHz; infinite at T = 0."""
        e = self.thermal_energy_GHz
        return math.inf if e == 0 else 1.0 / e


@dataclass(frozen=True)
class IsingProblem:
    """A system Ising instance plus the probe coupling of Eq.-type H_1P.

    ``couplings`` holds (i, j, J_ij) with 1-based qubit labels and i < j.
    The probe is not part of ``h``/``couplings``; its field h_P and the
    single coupling J_1P to qubit 1 are separate because the probe carries
    the compensating offset -J_1P on qubit 1.
    """

    n_system: int
    h: tuple
    couplings: tuple
    J_1P: float = 0.0
    h_P: float = 0.0

    def __post_init__(self):
        if self.n_system < 1:
            raise ValueError("need at least one system qubit")
        if self.n_system + 1 > MAX_QUBITS:
            raise ValueError(
                f"{self.n_system}+1 qubits exceeds the dense-solver limit of {MAX_QUBITS}"
            )
        if len(self.h) != self.n_system:
            raise ValueError("local field list must have one entry per system qubit")
        object.__setattr__(self, "h", tuple(float(x) for x in self.h))
        seen = set()
        norm = []
        for (i, j, val) in self.couplings:
            if not (1 <= i <= self.n_system and 1 <= j <= self.n_system):
                raise ValueError(f"coupling ({i},{j}) references a nonexistent qubit")
            if i == j:
                raise ValueError(f"self-coupling on qubit {i}")
            if i > j:
                i, j = j, i
            if (i, j) in seen:
                raise ValueError(f"duplicate coupling ({i},{j})")
            seen.add((i, j))
            norm.append((int(i), int(j), float(val)))
        object.__setattr__(self, "couplings", tuple(sorted(norm)))

    @property
    def n_qubits(self) -> int:
        return self.n_system + 1

    @property
    def dim(self) -> int:
        return 2 ** self.n_qubits

    @property
    def probe_offset_on_qubit1(self) -> float:
        return -self.J_1P

    def with_h_P(self, h_P: float) -> "IsingProblem":
        return replace(self, h_P=float(h_P))

    def full_fields(self) -> np.ndarray:
        """Coefficients of sigma^z_i in H_IS + H_1P, probe last."""
        f = np.array(self.h + (-self.h_P,), dtype=float)
        f[0] += self.probe_offset_on_qubit1
        return f

    def full_couplings(self) -> tuple:
        """(bit_i, bit_j, J) for all pairs including (qubit 1, probe)."""
        out = [(i - 1, j - 1, v) for (i, j, v) in self.couplings]
        out.append((0, self.n_system, self.J_1P))
        return tuple(out)

    def amplitudes(self, A_S: float, A_P: float) -> np.ndarray:
        """Per-qubit transverse amplitudes, probe last."""
        return np.array([A_S] * self.n_system + [A_P], dtype=float)


def dimer_instance(h_P: float = 1.03) -> IsingProblem:
    """Two ferromagnetically coupled qubits plus probe (J_S = -2.5, J_1P = -1.8)."""
    return IsingProblem(n_system=2, h=(0.0, 0.0), couplings=((1, 2, -2.5),),
                        J_1P=-1.8, h_P=h_P)


def ring_instance(n: int = 8, h_P: float = 1.7) -> IsingProblem:
    """Ferromagnetic n-qubit ring with zero fields, probe on qubit 1."""
    cps = [(i, i + 1, -2.5) for i in range(1, n)] + [(1, n, -2.5)]
    return IsingProblem(n_system=n, h=(0.0,) * n, couplings=tuple(cps),
                        J_1P=-1.8, h_P=h_P)


def sigma_z_values(n_qubits: int, bit: int) -> np.ndarray:
    """sigma^z eigenvalues (+1/-1) of one bit over all computational states."""
    z = np.arange(2 ** n_qubits)
    return 1.0 - 2.0 * ((z >> bit) & 1)


def ising_diagonal(problem: IsingProblem) -> np.ndarray:
    """Diagonal of H_IS + H_1P at B = 1 over the full system+probe register."""
    nq = problem.n_qubits
    diag = np.zeros(problem.dim)
    fields = problem.full_fields()
    for bit in range(nq):
        if fields[bit] != 0.0:
            diag += fields[bit] * sigma_z_values(nq, bit)
    for (bi, bj, v) in problem.full_couplings():
        if v != 0.0:
            diag += v * sigma_z_values(nq, bi) * sigma_z_values(nq, bj)
    return diag


def _add_transverse(H: np.ndarray, bit: int, amplitude: float) -> None:
    if amplitude == 0.0:
        return
    z = np.arange(H.shape[0])
    H[z, z ^ (1 << bit)] -= amplitude


def build_hamiltonian(problem: IsingProblem, A_S: float, A_P: float, B: float) -> np.ndarray:
    """Dense system+probe Hamiltonian at transverse amplitudes (A_S, A_P) and Ising scale B."""
    H = np.diag(B * ising_diagonal(problem))
    for bit in range(problem.n_system):
        _add_transverse(H, bit, A_S)
    _add_transverse(H, problem.n_system, A_P)
    return H


def build_system_hamiltonian(problem: IsingProblem, A_S: float, B: float) -> np.ndarray:
    """Dense Hamiltonian of the bare system (no probe terms)."""
    n = problem.n_system
    diag = np.zeros(2 ** n)
    for bit in range(n):
        if problem.h[bit] != 0.0:
            diag += problem.h[bit] * sigma_z_values(n, bit)
    for (i, j, v) in problem.couplings:
        diag += v * sigma_z_values(n, i - 1) * sigma_z_values(n, j - 1)
    H = np.diag(B * diag)
    for bit in range(n):
        _add_transverse(H, bit, A_S)
    return H


def build_probe_down_hamiltonian(problem: IsingProblem, A_S: float, B: float) -> np.ndarray:
    """System Hamiltonian seen when the probe points down: H_S - 2 B J_1P sigma^z_1."""
    H = build_system_hamiltonian(problem, A_S, B)
    H += np.diag(-2.0 * B * problem.J_1P * sigma_z_values(problem.n_system, 0))
    return H


# ---------------------------------------------------------------------------
# Anneal schedules


@dataclass(frozen=True)
class AnnealSchedule:
    """Tabulated anneal waveforms A_S(s), A_P(s), B(s) on s in [0, 1].

    ``kind`` selects the interpolant: 'linear' or 'monotone-cubic' (PCHIP,
    overshoot-free so tabulated monotonicity survives interpolation).
    ``provenance`` is carried through file round-trips ('synthetic' or
    'measured').
    """

    s: np.ndarray
    A_S: np.ndarray
    A_P: np.ndarray
    B: np.ndarray
    kind: str = "monotone-cubic"
    provenance: str = "synthetic"
    _interp: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        if s.ndim != 1 or len(s) < 2:
            raise ValueError("schedule needs at least two nodes")
        if not (np.all(np.diff(s) > 0) and s[0] == 0.0 and s[-1] == 1.0):
            raise ValueError("schedule nodes must increase strictly from 0 to 1")
        cols = {}
        for name in ("A_S", "A_P", "B"):
            col = np.asarray(getattr(self, name), dtype=float)
            if col.shape != s.shape:
                raise ValueError(f"{name} must match the node grid")
            if np.any(col < 0):
                raise ValueError(f"{name} must be non-negative")
            cols[name] = col
        if np.any(np.diff(cols["A_S"]) > 1e-12) or np.any(np.diff(cols["A_P"]) > 1e-12):
            raise ValueError("transverse amplitudes must be non-increasing in s")
        if np.any(np.diff(cols["B"]) < -1e-12):
            raise ValueError("B must be non-decreasing in s")
        if self.kind not in ("linear", "monotone-cubic"):
            raise ValueError(f"unknown interpolation kind {self.kind!r}")
        object.__setattr__(self, "s", s)
        for name, col in cols.items():
            object.__setattr__(self, name, col)
        interp = None
        if self.kind == "monotone-cubic":
            interp = {name: PchipInterpolator(s, col) for name, col in cols.items()}
        object.__setattr__(self, "_interp", interp)

    def evaluate(self, s):
        """(A_S, A_P, B) at anneal fraction s; s may be scalar or array."""
        s_arr = np.asarray(s, dtype=float)
        if np.any(s_arr < 0.0) or np.any(s_arr > 1.0):
            raise ValueError("anneal fraction outside [0, 1]")
        if self.kind == "linear":
            vals = tuple(np.interp(s_arr, self.s, getattr(self, name))
                         for name in ("A_S", "A_P", "B"))
        else:
            vals = tuple(self._interp[name](s_arr) for name in ("A_S", "A_P", "B"))
        if np.isscalar(s) or s_arr.ndim == 0:
            return tuple(float(v) for v in vals)
        return vals


def default_schedule(nodes: int = 201) -> AnnealSchedule:
    """Synthetic schedule: A(s) = 30 (1-s)^4.5 GHz for system and probe, B(s) = 12 s GHz.

    The steep transverse decay mimics hardware waveforms: by s ~ 0.3 the
    transverse scale has dropped to a few GHz while B dominates, which is the
    regime the tunneling-spectroscopy protocol operates in.
    """
    s = np.linspace(0.0, 1.0, nodes)
    A = 30.0 * (1.0 - s) ** 4.5
    return AnnealSchedule(s=s, A_S=A, A_P=A.copy(), B=12.0 * s,
                          kind="monotone-cubic", provenance="synthetic")


def save_schedule(schedule: AnnealSchedule, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# {schedule.provenance}\n")
        fh.write("s,A_S,A_P,B\n")
        for k in range(len(schedule.s)):
            fh.write(f"{float(schedule.s[k])!r},{float(schedule.A_S[k])!r},"
                     f"{float(schedule.A_P[k])!r},{float(schedule.B[k])!r}\n")


def load_schedule(path, kind: str = "monotone-cubic") -> AnnealSchedule:
    provenance = "measured"
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                tag = line.lstrip("#").strip()
                if tag:
                    provenance = tag
                continue
            if line.lower().startswith("s,"):
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ValueError(f"malformed schedule row: {line!r}")
            rows.append([float(x) for x in parts])
    if not rows:
        raise ValueError("schedule file contains no data rows")
    arr = np.array(rows)
    return AnnealSchedule(s=arr[:, 0], A_S=arr[:, 1], A_P=arr[:, 2], B=arr[:, 3],
                          kind=kind, provenance=provenance)


# ---------------------------------------------------------------------------
# Problem file round-trip (plain key-value text)


def save_problem(problem: IsingProblem, path) -> None:
    with open(path, "w") as fh:
        fh.write("# probe-spectroscopy instance\n")
        fh.write(f"n_system {problem.n_system}\n")
        for i, hi in enumerate(problem.h, start=1):
            fh.write(f"h {i} {hi!r}\n")
        for (i, j, v) in problem.couplings:
            fh.write(f"J {i} {j} {v!r}\n")
        fh.write(f"J_1P {problem.J_1P!r}\n")
        fh.write(f"h_P {problem.h_P!r}\n")


def load_problem(path) -> IsingProblem:
    n_system = None
    hmap = {}
    cps = []
    scalars = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            key = parts[0]
            try:
                if key == "n_system":
                    n_system = int(parts[1])
                elif key == "h":
                    hmap[int(parts[1])] = float(parts[2])
                elif key == "J":
                    cps.append((int(parts[1]), int(parts[2]), float(parts[3])))
                elif key in ("J_1P", "h_P"):
                    scalars[key] = float(parts[1])
                else:
                    raise ValueError(f"unknown key {key!r}")
            except (IndexError, ValueError) as exc:
                raise ValueError(f"{path}:{ln}: {exc}") from exc
    if n_system is None:
        raise ValueError(f"{path}: missing n_system")
    h = tuple(hmap.get(i, 0.0) for i in range(1, n_system + 1))
    return IsingProblem(n_system=n_system, h=h, couplings=tuple(cps),
                        J_1P=scalars.get("J_1P", 0.0), h_P=scalars.get("h_P", 0.0))


# ---------------------------------------------------------------------------
# Control-noise models


@dataclass(frozen=True)
class NoiseSpec:
    """Programmed-field disorder model.

    kinds:
      none                 -- pass the problem through untouched
      ice-probe-only       -- Gaussian errors on (h_P, J_1P) only
      ice-all              -- Gaussian errors on every programmed field/coupling
      alpha-shift          -- one shared offset alpha added to all system h_i
      hamiltonian-gaussian -- five Gaussian coefficients for the two-qubit
                              robustness Hamiltonian; returned as an array, not
                              as a perturbed problem
    """

    kind: str = "none"
    sigma: float = 0.0
    alpha_values: tuple = (-0.1, 0.0, 0.1)

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


def apply_alpha_shift(problem: IsingProblem, alpha: float) -> IsingProblem:
    """Add the same offset alpha to every system local field."""
    return replace(problem, h=tuple(hi + alpha for hi in problem.h))


def sample_noise(spec: NoiseSpec, problem: IsingProblem, rng: np.random.Generator):
    """Draw one noise realization.

    Returns a perturbed IsingProblem, except for kind 'hamiltonian-gaussian'
    where the five alpha coefficients are returned for the entanglement
    robustness scan.  Draw order is fixed (h_1..h_N, couplings in sorted
    order, J_1P, h_P) so results are reproducible for a seeded generator.
    """
    if spec.kind == "none":
        return problem
    if spec.kind == "alpha-shift":
        alpha = spec.alpha_values[int(rng.integers(len(spec.alpha_values)))]
        return apply_alpha_shift(problem, alpha)
    if spec.kind == "hamiltonian-gaussian":
        return rng.normal(0.0, spec.sigma, size=5)
    if spec.kind == "ice-probe-only":
        return replace(problem,
                       h_P=problem.h_P + rng.normal(0.0, spec.sigma),
                       J_1P=problem.J_1P + rng.normal(0.0, spec.sigma))
    # ice-all
    h = tuple(hi + rng.normal(0.0, spec.sigma) for hi in problem.h)
    cps = tuple((i, j, v + rng.normal(0.0, spec.sigma)) for (i, j, v) in problem.couplings)
    return replace(problem, h=h, couplings=cps,
                   J_1P=problem.J_1P + rng.normal(0.0, spec.sigma),
                   h_P=problem.h_P + rng.normal(0.0, spec.sigma))
