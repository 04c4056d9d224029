"""Run configuration: YAML loading, validation, and content hashing.

A run is described by one YAML mapping.  Every key is optional; defaults
reproduce the standard two-qubit instance under the synthetic schedule.
``load_config`` also accepts a previously written run manifest (detected by
its ``config`` key), so a finished run can be re-ingested verbatim.

The configuration hash covers everything that can change numbers: backend,
instance, schedule, protocol, bath, noise, seed, and the per-backend
options.  Output location and worker count are excluded on purpose --
results are invariant to both, and moving artifacts around must not make
reruns look different.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import langevin, spectroscopy, sqa
from .bath import BathSpec
from .model import (KB_GHZ_PER_K, AnnealSchedule, IsingProblem, NoiseSpec,
                    default_schedule, dimer_instance, load_problem,
                    load_schedule)

BACKENDS = ("me", "sqa", "sssv", "langevin")
MC_BACKENDS = ("sqa", "sssv")
DEFAULT_SEED = 1234
DEFAULT_TEMPERATURE = 0.0125
AUTO_GRID_LEVELS = 3
AUTO_GRID_POINTS = {"me": 121, "sqa": 121, "sssv": 121, "langevin": 21}
READOUT_MODES = sqa.READOUT_MODES


class ConfigError(Exception):
    """Invalid run configuration; the message names the offending field."""


@dataclass(frozen=True)
class ThermalOptions:
    """Thermal-hold sampling parameters (``thermal`` section)."""

    sweeps: int = 1000
    repetitions: int = 10_000
    n_tau: int = sqa.SQA_DEFAULT_N_TAU
    beta: float = None        # None -> 1 / (k_B T) from the run temperature
    h_P: float = None         # None -> the instance's programmed bias
    readout: str = "slice"


@dataclass(frozen=True)
class EntanglementOptions:
    """Negativity/witness report parameters (``entanglement`` section)."""

    sigma: float = 0.1
    samples: int = 10_000
    bins: int = 50
    dP: float = 0.01          # half-width of the population box for the bound


@dataclass(frozen=True)
class LangevinOptions:
    """Spin-Langevin scan parameters (``langevin`` section)."""

    chi: float = langevin.LANGEVIN_CHI
    leg_time: float = langevin.LANGEVIN_LEG_TIME
    tau_fixed: float = None   # hold for the bias scan; None -> tau-grid median
    h_P: float = None         # bias for the hold scan; None -> first resonance


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run description.

    ``echo`` is the normalized configuration mapping (defaults filled in,
    grids kept in generating form); ``config_hash`` is the SHA-1 of its
    canonical JSON rendering.  Grids are resolved into ``params`` at load
    time, so a fixed seed pins every downstream artifact byte for byte.
    """

    backend: str
    problem: IsingProblem
    schedule: AnnealSchedule
    params: spectroscopy.ProtocolParams
    bath: BathSpec
    noise: NoiseSpec
    seed: int
    workers: int
    out: str          # as requested; the driver picks the actual directory
    temperature: float
    me_truncation: int
    me_steps: int
    sqa_n_tau: int
    thermal: ThermalOptions
    entanglement: EntanglementOptions
    langevin_opts: LangevinOptions
    echo: dict
    config_hash: str

    @property
    def beta(self) -> float:
        return 1.0 / (KB_GHZ_PER_K * self.temperature)


# ---------------------------------------------------------------------------
# typed field access with path-qualified errors

_MISSING = object()


def _mapping(cfg: dict, key: str) -> dict:
    val = cfg.get(key)
    if val is None:
        return {}
    if not isinstance(val, dict):
        raise ConfigError(f"{key}: expected a mapping, got {type(val).__name__}")
    return val


def _reject_unknown(section: dict, path: str, known) -> None:
    extra = sorted(set(section) - set(known))
    if extra:
        raise ConfigError(f"{path}.{extra[0]}: unknown key")


def _number(section, path, key, default, *, minimum=None, maximum=None,
            allow_none=False):
    val = section.get(key, default)
    if val is None:
        if allow_none:
            return None
        raise ConfigError(f"{path}.{key}: required")
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number, got {val!r}")
    val = float(val)
    if minimum is not None and val < minimum:
        raise ConfigError(f"{path}.{key}: must be >= {minimum}, got {val:g}")
    if maximum is not None and val > maximum:
        raise ConfigError(f"{path}.{key}: must be <= {maximum}, got {val:g}")
    return val


def _integer(section, path, key, default, *, minimum=None, allow_none=False):
    val = section.get(key, default)
    if val is None:
        if allow_none:
            return None
        raise ConfigError(f"{path}.{key}: required")
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"{path}.{key}: expected an integer, got {val!r}")
    if minimum is not None and val < minimum:
        raise ConfigError(f"{path}.{key}: must be >= {minimum}, got {val}")
    return int(val)


def _choice(section, path, key, default, choices):
    val = section.get(key, default)
    if val not in choices:
        raise ConfigError(f"{path}.{key}: expected one of {choices}, got {val!r}")
    return val


def _flag(section, path, key, default):
    val = section.get(key, default)
    if not isinstance(val, bool):
        raise ConfigError(f"{path}.{key}: expected true/false, got {val!r}")
    return bool(val)


def _existing_file(cfg, key):
    val = cfg.get(key)
    if val is None:
        return None
    if not isinstance(val, str):
        raise ConfigError(f"{key}: expected a file path, got {val!r}")
    path = Path(val)
    if not path.is_file():
        raise ConfigError(f"{key}: file not found: {val}")
    return path


# ---------------------------------------------------------------------------
# grid specifications


def _grid_spec(section, path, key, default_spec, *, allow_auto=False):
    """Normalize a grid entry.

    Accepted forms: ``{values: [...]}``; ``{kind: linear|geom, lo, hi,
    points}``; and for the bias grid the string ``auto`` or ``{kind: auto,
    n_levels, points}``, resolved later against the instance spectrum.
    """
    spec = section.get(key, default_spec)
    where = f"{path}.{key}"
    if isinstance(spec, str):
        if allow_auto and spec == "auto":
            spec = {"kind": "auto"}
        else:
            raise ConfigError(f"{where}: unknown grid shorthand {spec!r}")
    if not isinstance(spec, dict):
        raise ConfigError(f"{where}: expected a mapping or 'auto'")
    if "values" in spec:
        _reject_unknown(spec, where, ("values",))
        vals = spec["values"]
        if (not isinstance(vals, list) or not vals
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                           for v in vals)):
            raise ConfigError(f"{where}.values: expected a non-empty number list")
        return {"values": [float(v) for v in vals]}
    kind = _choice(spec, where, "kind", None,
                   ("linear", "geom", "auto") if allow_auto else ("linear", "geom"))
    if kind == "auto":
        out = {"kind": "auto",
               "n_levels": _integer(spec, where, "n_levels", AUTO_GRID_LEVELS,
                                    minimum=1),
               "points": _integer(spec, where, "points", None, minimum=2,
                                  allow_none=True)}
        _reject_unknown(spec, where, ("kind", "n_levels", "points"))
        return out
    lo = _number(spec, where, "lo", None)
    hi = _number(spec, where, "hi", None)
    points = _integer(spec, where, "points", None, minimum=2)
    _reject_unknown(spec, where, ("kind", "lo", "hi", "points"))
    if not lo < hi:
        raise ConfigError(f"{where}: need lo < hi, got {lo:g} >= {hi:g}")
    if kind == "geom" and lo <= 0.0:
        raise ConfigError(f"{where}: geometric grids need lo > 0")
    return {"kind": kind, "lo": lo, "hi": hi, "points": points}


def _realize_grid(spec, where, *, problem=None, schedule=None, s_star=None,
                  backend=None, integer=False):
    if "values" in spec:
        grid = np.asarray(spec["values"], dtype=float)
    elif spec["kind"] == "auto":
        points = spec["points"]
        if points is None:
            points = AUTO_GRID_POINTS[backend]
        grid = spectroscopy.default_h_P_grid(problem, schedule, s_star,
                                             n_levels=spec["n_levels"],
                                             points=points)
    elif spec["kind"] == "linear":
        grid = np.linspace(spec["lo"], spec["hi"], spec["points"])
    else:
        grid = np.geomspace(spec["lo"], spec["hi"], spec["points"])
    if integer:
        grid = np.round(grid)
    if np.any(np.diff(grid) <= 0.0):
        raise ConfigError(f"{where}: grid is not strictly ascending"
                          + (" after rounding to whole sweeps" if integer else ""))
    return grid


def _default_tau_spec(backend: str) -> dict:
    if backend == "me":
        return {"kind": "geom", "lo": 0.01, "hi": 30.0, "points": 8}
    if backend == "langevin":
        # the classical transient has died out by tau ~ 1000, so a decade
        # past the knee probes steady state rather than the approach to it
        return {"kind": "geom", "lo": 1000.0, "hi": 10000.0, "points": 5}
    # Monte Carlo holds are whole sweeps; a doubling ladder keeps the decay
    # fit conditioned without fractional-sweep rounding artifacts
    return {"values": [float(64 * 2 ** k) for k in range(8)]}


# ---------------------------------------------------------------------------
# loading


def _normalize(raw: dict) -> tuple:
    """Validate ``raw`` and build (echo, resolved RunConfig fields)."""
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected a mapping")
    known = ("backend", "problem", "schedule", "seed", "workers", "out",
             "temperature", "protocol", "bath", "noise", "me", "sqa",
             "langevin", "thermal", "entanglement")
    _reject_unknown(raw, "top level", known)

    backend = _choice(raw, "run", "backend", "me", BACKENDS)
    seed = _integer(raw, "run", "seed", DEFAULT_SEED, minimum=0)
    workers = _integer(raw, "run", "workers", 1, minimum=1)
    temperature = _number(raw, "run", "temperature", DEFAULT_TEMPERATURE,
                          minimum=1e-6)
    out = raw.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError(f"out: expected a directory path, got {out!r}")

    problem_path = _existing_file(raw, "problem")
    schedule_path = _existing_file(raw, "schedule")
    problem = load_problem(problem_path) if problem_path else dimer_instance()
    schedule = (load_schedule(schedule_path) if schedule_path
                else default_schedule())

    proto = _mapping(raw, "protocol")
    _reject_unknown(proto, "protocol",
                    ("s_star", "s_P", "tau1", "repetitions", "tau_grid",
                     "h_P_grid"))
    s_star = _number(proto, "protocol", "s_star", 0.339, minimum=1e-6,
                     maximum=1.0)
    s_P = _number(proto, "protocol", "s_P", None, maximum=1.0, allow_none=True)
    tau1 = _number(proto, "protocol", "tau1",
                   10.0 if backend == "me" else 5.0, minimum=1e-9)
    repetitions = _integer(proto, "protocol", "repetitions",
                           langevin.LANGEVIN_REPETITIONS
                           if backend == "langevin"
                           else spectroscopy.MC_REPETITIONS, minimum=1)
    tau_spec = _grid_spec(proto, "protocol", "tau_grid",
                          _default_tau_spec(backend))
    h_spec = _grid_spec(proto, "protocol", "h_P_grid", "auto", allow_auto=True)

    bath_sec = _mapping(raw, "bath")
    _reject_unknown(bath_sec, "bath",
                    ("kind", "eta_g2", "coupling_ratio", "omega_c", "omega_ir",
                     "beta", "lamb_shift"))
    bath_defaults = BathSpec()
    bath_kinds = ("ohmic", "ohmic-plus-telegraph", "one-over-f")
    bath_beta = _number(bath_sec, "bath", "beta", None, minimum=0.0,
                        allow_none=True)
    try:
        bath = BathSpec(
            kind=_choice(bath_sec, "bath", "kind", "ohmic",
                         bath_kinds),
            eta_g2=_number(bath_sec, "bath", "eta_g2", bath_defaults.eta_g2,
                           minimum=0.0),
            coupling_ratio=_number(bath_sec, "bath", "coupling_ratio",
                                   bath_defaults.coupling_ratio, minimum=1.0),
            omega_c=_number(bath_sec, "bath", "omega_c", bath_defaults.omega_c,
                            minimum=1e-9),
            omega_ir=_number(bath_sec, "bath", "omega_ir",
                             bath_defaults.omega_ir, minimum=1e-12),
            beta=(1.0 / (KB_GHZ_PER_K * temperature)
                  if bath_beta is None else bath_beta),
            lamb_shift=_flag(bath_sec, "bath", "lamb_shift", True))
    except ValueError as exc:
        raise ConfigError(f"bath: {exc}") from exc

    noise_sec = _mapping(raw, "noise")
    _reject_unknown(noise_sec, "noise", ("kind", "sigma", "alpha_values"))
    alphas = noise_sec.get("alpha_values", [-0.1, 0.0, 0.1])
    if (not isinstance(alphas, list) or not alphas
            or not all(isinstance(a, (int, float)) and not isinstance(a, bool)
                       for a in alphas)):
        raise ConfigError("noise.alpha_values: expected a non-empty number list")
    try:
        noise = NoiseSpec(
            kind=_choice(noise_sec, "noise", "kind", "none",
                         ("none", "ice-probe-only", "ice-all", "alpha-shift",
                          "hamiltonian-gaussian")),
            sigma=_number(noise_sec, "noise", "sigma", 0.0, minimum=0.0),
            alpha_values=tuple(float(a) for a in alphas))
    except ValueError as exc:
        raise ConfigError(f"noise: {exc}") from exc

    me_sec = _mapping(raw, "me")
    _reject_unknown(me_sec, "me", ("m", "steps"))
    me_truncation = _integer(me_sec, "me", "m", None, minimum=2,
                             allow_none=True)
    me_steps = _integer(me_sec, "me", "steps", 0, minimum=0)

    sqa_sec = _mapping(raw, "sqa")
    _reject_unknown(sqa_sec, "sqa", ("n_tau",))
    sqa_n_tau = _integer(sqa_sec, "sqa", "n_tau", sqa.SQA_DEFAULT_N_TAU,
                         minimum=2)

    lan_sec = _mapping(raw, "langevin")
    _reject_unknown(lan_sec, "langevin", ("chi", "leg_time", "tau_fixed", "h_P"))
    lan = LangevinOptions(
        chi=_number(lan_sec, "langevin", "chi", langevin.LANGEVIN_CHI,
                    minimum=0.0),
        leg_time=_number(lan_sec, "langevin", "leg_time",
                         langevin.LANGEVIN_LEG_TIME, minimum=0.0),
        tau_fixed=_number(lan_sec, "langevin", "tau_fixed", None, minimum=0.0,
                          allow_none=True),
        h_P=_number(lan_sec, "langevin", "h_P", None, allow_none=True))

    th_sec = _mapping(raw, "thermal")
    _reject_unknown(th_sec, "thermal",
                    ("sweeps", "repetitions", "n_tau", "beta", "h_P",
                     "readout"))
    thermal = ThermalOptions(
        sweeps=_integer(th_sec, "thermal", "sweeps", 1000, minimum=1),
        repetitions=_integer(th_sec, "thermal", "repetitions", 10_000,
                             minimum=1),
        n_tau=_integer(th_sec, "thermal", "n_tau", sqa.SQA_DEFAULT_N_TAU,
                       minimum=2),
        beta=_number(th_sec, "thermal", "beta", None, minimum=0.0,
                     allow_none=True),
        h_P=_number(th_sec, "thermal", "h_P", None, allow_none=True),
        readout=_choice(th_sec, "thermal", "readout", "slice", READOUT_MODES))

    ent_sec = _mapping(raw, "entanglement")
    _reject_unknown(ent_sec, "entanglement", ("sigma", "samples", "bins", "dP"))
    ent = EntanglementOptions(
        sigma=_number(ent_sec, "entanglement", "sigma", 0.1, minimum=0.0),
        samples=_integer(ent_sec, "entanglement", "samples", 10_000, minimum=1),
        bins=_integer(ent_sec, "entanglement", "bins", 50, minimum=1),
        dP=_number(ent_sec, "entanglement", "dP", 0.01, minimum=0.0,
                   maximum=1.0))

    try:
        tau_grid = _realize_grid(tau_spec, "protocol.tau_grid",
                                 integer=backend in MC_BACKENDS)
        h_P_grid = _realize_grid(h_spec, "protocol.h_P_grid", problem=problem,
                                 schedule=schedule, s_star=s_star,
                                 backend=backend)
        params = spectroscopy.ProtocolParams(
            s_star=s_star, s_P=s_P, tau1=tau1, tau_grid=tau_grid,
            h_P_grid=h_P_grid, repetitions=repetitions)
    except ValueError as exc:
        raise ConfigError(f"protocol: {exc}") from exc

    echo = {
        "backend": backend,
        "problem": str(problem_path.resolve()) if problem_path else None,
        "schedule": str(schedule_path.resolve()) if schedule_path else None,
        "seed": seed,
        "temperature": temperature,
        "protocol": {"s_star": s_star, "s_P": params.s_P, "tau1": tau1,
                     "repetitions": repetitions, "tau_grid": tau_spec,
                     "h_P_grid": h_spec},
        "bath": {"kind": bath.kind, "eta_g2": bath.eta_g2,
                 "coupling_ratio": bath.coupling_ratio,
                 "omega_c": bath.omega_c, "omega_ir": bath.omega_ir,
                 "beta": bath.beta, "lamb_shift": bath.lamb_shift},
        "noise": {"kind": noise.kind, "sigma": noise.sigma,
                  "alpha_values": list(noise.alpha_values)},
        "me": {"m": me_truncation, "steps": me_steps},
        "sqa": {"n_tau": sqa_n_tau},
        "langevin": {"chi": lan.chi, "leg_time": lan.leg_time,
                     "tau_fixed": lan.tau_fixed, "h_P": lan.h_P},
        "thermal": {"sweeps": thermal.sweeps,
                    "repetitions": thermal.repetitions,
                    "n_tau": thermal.n_tau, "beta": thermal.beta,
                    "h_P": thermal.h_P, "readout": thermal.readout},
        "entanglement": {"sigma": ent.sigma, "samples": ent.samples,
                         "bins": ent.bins, "dP": ent.dP},
    }
    return (echo, backend, problem, schedule, params, bath, noise, seed,
            workers, out, temperature, me_truncation, me_steps, sqa_n_tau,
            thermal, ent, lan)


def config_hash(echo: dict) -> str:
    """SHA-1 of the canonical JSON rendering of the normalized config."""
    blob = json.dumps(echo, sort_keys=True, separators=(",", ":"))
    return hashlib.sha1(blob.encode()).hexdigest()


def load_config(path=None, **overrides) -> RunConfig:
    """Build a RunConfig from a YAML file plus command-line overrides.

    ``path`` may be a run manifest (recognized by its ``config`` key); the
    embedded echo is then re-normalized, which reproduces the original hash
    and therefore the original run.  Recognized overrides: backend, seed,
    workers, out (None values are ignored).
    """
    if path is not None:
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config: invalid YAML in {path}: {exc}") from exc
        if raw is None:
            raw = {}
        if isinstance(raw, dict) and "config" in raw and "config_hash" in raw:
            raw = raw["config"]
            if isinstance(raw, dict):
                # manifests echo null for defaulted sections; strip those
                raw = {k: v for k, v in raw.items() if v is not None}
    else:
        raw = {}

    unknown = sorted(set(overrides) - {"backend", "seed", "workers", "out"})
    if unknown:
        raise ConfigError(f"override {unknown[0]}: not a recognized setting")
    for key, val in overrides.items():
        if val is not None:
            raw = dict(raw)
            raw[key] = val

    (echo, backend, problem, schedule, params, bath, noise, seed, workers,
     out, temperature, me_truncation, me_steps, sqa_n_tau, thermal, ent,
     lan) = _normalize(raw)
    return RunConfig(backend=backend, problem=problem, schedule=schedule,
                     params=params, bath=bath, noise=noise, seed=seed,
                     workers=workers, out=out, temperature=temperature,
                     me_truncation=me_truncation, me_steps=me_steps,
                     sqa_n_tau=sqa_n_tau, thermal=thermal, entanglement=ent,
                     langevin_opts=lan, echo=echo,
                     config_hash=config_hash(echo))
