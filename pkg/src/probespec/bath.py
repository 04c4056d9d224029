"""Bath spectral functions and the Lamb shift.

All frequencies are plain GHz (h = 1) and beta is in 1/GHz, so beta*omega is
dimensionless.  The functions here are "reduced": the dimensionless coupling
combination g^2 eta / hbar^2 is applied by the master-equation assembly, not
folded into gamma.  Every kind satisfies the KMS condition

    gamma(-omega) = exp(-beta omega) gamma(omega)

exactly in exact arithmetic because the thermal factor omega/(1 - e^{-beta
omega}) carries the detailed-balance asymmetry and every other factor is even
in omega.  The low-frequency parts of the telegraph and 1/f components are
regularized by an infrared rolloff omega_ir.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

DEFAULT_ETA_G2 = 1.2732e-4          # g_S^2 eta / hbar^2
DEFAULT_OMEGA_C = 8.0 * math.pi     # GHz
DEFAULT_BETA = 1.0 / (20.836619 * 0.0125)   # 12.5 mK in 1/GHz

BATH_KINDS = ("ohmic", "ohmic-plus-telegraph", "one-over-f")


@dataclass(frozen=True)
class BathSpec:
    """Bath model parameters shared by all dissipative channels.

    System qubits couple with weight ``eta_g2``; the probe couples with
    ``eta_g2 * coupling_ratio**2`` (g_P = ratio * g_S).
    """

    kind: str = "ohmic"
    eta_g2: float = DEFAULT_ETA_G2
    coupling_ratio: float = 10.0
    omega_c: float = DEFAULT_OMEGA_C
    omega_ir: float = 1.0
    beta: float = DEFAULT_BETA
    lamb_shift: bool = True

    def __post_init__(self):
        if self.kind not in BATH_KINDS:
            raise ValueError(f"unknown bath kind {self.kind!r}")
        if self.eta_g2 < 0 or self.omega_c <= 0 or self.beta < 0:
            raise ValueError("bath parameters out of range")
        if self.coupling_ratio < 1.0:
            raise ValueError("probe/system coupling ratio must be >= 1")
        if self.kind != "ohmic" and self.omega_ir <= 0:
            raise ValueError("telegraph/1-f kinds need a positive omega_ir")

    def coupling_weight(self, is_probe: bool) -> float:
        return self.eta_g2 * (self.coupling_ratio ** 2 if is_probe else 1.0)


def _thermal_factor(x):
    """x / (1 - e^{-x}), continuous through x = 0, overflow-safe for x << 0."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-6
    xs = x[small]
    out[small] = 1.0 + 0.5 * xs + xs * xs / 12.0
    xp = x[~small & (x > 0)]
    out[~small & (x > 0)] = xp / (-np.expm1(-xp))
    xn = x[~small & (x < 0)]
    out[~small & (x < 0)] = xn * np.exp(xn) / np.expm1(xn)
    return out


def gamma_ohmic(omega, bath: BathSpec):
    """2 pi omega e^{-|omega|/omega_c} / (1 - e^{-beta omega}); value 2 pi / beta at 0."""
    w = np.asarray(omega, dtype=float)
    return 2.0 * math.pi * np.exp(-np.abs(w) / bath.omega_c) * _thermal_factor(bath.beta * w) / bath.beta


def gamma_telegraph(omega, bath: BathSpec):
    """omega / [(1 - e^{-beta omega})(omega^2 + omega_ir^2)]."""
    w = np.asarray(omega, dtype=float)
    return _thermal_factor(bath.beta * w) / bath.beta / (w * w + bath.omega_ir ** 2)


def gamma_one_over_f(omega, bath: BathSpec):
    """2 pi omega e^{-|omega|/omega_c} / [(1 - e^{-beta omega})(omega^2 + omega_ir^2)].

    The printed form of this density carries |omega| in the numerator, which
    breaks KMS for omega < 0; the odd numerator used here coincides with it
    for omega > 0 and restores detailed balance everywhere.
    """
    w = np.asarray(omega, dtype=float)
    return (2.0 * math.pi * np.exp(-np.abs(w) / bath.omega_c)
            * _thermal_factor(bath.beta * w) / bath.beta / (w * w + bath.omega_ir ** 2))


def gamma(omega, bath: BathSpec):
    """Bath spectral function for the configured kind (scalar in, scalar out).

    The telegraph and 1/f components are additive extensions of the base
    Ohmic bath with the same coupling strength.
    """
    g = gamma_ohmic(omega, bath)
    if bath.kind == "ohmic-plus-telegraph":
        g = g + gamma_telegraph(omega, bath)
    elif bath.kind == "one-over-f":
        g = g + gamma_one_over_f(omega, bath)
    if np.isscalar(omega):
        return float(g)
    return g


# ---------------------------------------------------------------------------
# Lamb shift


def lamb_shift(omega: float, bath: BathSpec, window: float = 1.0,
               rel_tol: float = 1e-9) -> float:
    """S(omega) = (1/2pi) PV int gamma(w')/(omega - w') dw'.

    The principal value is evaluated by excising a symmetric window around
    the pole, integrating the antisymmetrized integrand across the window
    (regular there, -> -2 gamma'(omega) at the pole) and adaptive quadrature
    on both exterior tails.  Returns 0 when the shift is toggled off.
    """
    if not bath.lamb_shift:
        return 0.0
    omega = float(omega)

    def g(w):
        return gamma(w, bath)

    def inner(u):
        return (g(omega - u) - g(omega + u)) / u

    val_in, err_in = quad(inner, 1e-12, window, epsabs=1e-13, epsrel=rel_tol, limit=200)

    def outer(w):
        return g(w) / (omega - w)

    lo, err_lo = quad(outer, -np.inf, omega - window, epsabs=1e-13, epsrel=rel_tol, limit=400)
    hi, err_hi = quad(outer, omega + window, np.inf, epsabs=1e-13, epsrel=rel_tol, limit=400)
    value = (val_in + lo + hi) / (2.0 * math.pi)
    residual = (err_in + err_lo + err_hi) / (2.0 * math.pi)
    if residual > max(1e-7, 1e-5 * abs(value)):
        # the tail error estimate is pessimistic at loose tolerances for
        # some omega; tighten before declaring the point unconverged
        if rel_tol > 1e-10:
            return lamb_shift(omega, bath, window=window, rel_tol=0.1 * rel_tol)
        raise RuntimeError(
            f"Lamb-shift quadrature did not converge at omega={omega:g} "
            f"(residual estimate {residual:.3e})")
    return value


class LambShiftTable:
    """S(omega) precomputed on a uniform grid with cubic interpolation.

    Evaluations outside the tabulated range fall back to direct quadrature.
    The default 2001-point grid over +-omega_max keeps the interpolation
    error well below the 1e-4 relative budget for omega_c-scale structure.
    """

    def __init__(self, bath: BathSpec, omega_max: float = 50.0, nodes: int = 2001):
        from scipy.interpolate import CubicSpline

        self.bath = bath
        self.omega_max = float(omega_max)
        self.grid = np.linspace(-self.omega_max, self.omega_max, nodes)
        if bath.lamb_shift:
            self.values = np.array([lamb_shift(w, bath, rel_tol=1e-8) for w in self.grid])
        else:
            self.values = np.zeros_like(self.grid)
        self._spline = CubicSpline(self.grid, self.values)
        self._overflow = {}

    def __call__(self, omega):
        w = np.asarray(omega, dtype=float)
        flat = np.atleast_1d(w).ravel()
        out = np.empty_like(flat)
        inside = np.abs(flat) <= self.omega_max
        out[inside] = self._spline(flat[inside])
        for idx in np.nonzero(~inside)[0]:
            key = float(flat[idx])
            if key not in self._overflow:
                self._overflow[key] = lamb_shift(key, self.bath)
            out[idx] = self._overflow[key]
        if np.isscalar(omega):
            return float(out[0])
        return out.reshape(np.shape(omega))


_TABLE_MEMO = {}


def lamb_shift_table(bath: BathSpec, omega_max: float = 50.0, nodes: int = 2001) -> LambShiftTable:
    """Memoized table constructor; repeated acceptance runs share the cache."""
    key = (bath, round(float(omega_max), 9), int(nodes))
    if key not in _TABLE_MEMO:
        _TABLE_MEMO[key] = LambShiftTable(bath, omega_max=omega_max, nodes=nodes)
    return _TABLE_MEMO[key]
