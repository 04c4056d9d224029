"""Command-line driver: run one experiment, leave plot-ready tables behind.

Subcommands map one-to-one onto the experiments: ``spectroscopy`` scans the
probe bias and reconstructs gaps and populations, ``thermal-hold`` samples
the equilibrium histogram and compares it with the Gibbs diagonal,
``entanglement`` writes the negativity-robustness histogram and the witness
report, and ``langevin`` runs the flat-response checks for the spin-vector
model.

Every artifact is a comma-separated table headed by the same four comment
lines (tool version, command, configuration hash, seed), and every run ends
with a ``manifest.yaml`` that echoes the full normalized configuration; the
manifest itself is a valid ``--config`` input, which is how a run is
reproduced.  Exit codes: 0 success, 2 configuration error, 3 numerical
failure before any artifact, 4 partial results (kept on disk next to a
``FAILED.txt`` marker).
"""

from __future__ import annotations

import argparse
import os
import sys
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import (__version__, entanglement, langevin, model, runconfig,
               spectroscopy, spectrum, sqa)
from .runconfig import ConfigError, RunConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_PARTIAL = 4
OUT_ENV = "PROBESPEC_OUT"
MANIFEST_NAME = "manifest.yaml"
FAILED_NAME = "FAILED.txt"


@dataclass
class RunContext:
    """Everything a command needs to emit artifacts."""

    cfg: RunConfig
    command: str
    out: Path
    header: str
    written: list = field(default_factory=list)


def _header(cfg: RunConfig, command: str) -> str:
    return (f"# probespec {__version__}\n"
            f"# command: {command}\n"
            f"# config_hash: {cfg.config_hash}\n"
            f"# seed: {cfg.seed}\n")


def _emit_text(ctx: RunContext, name: str, body: str) -> Path:
    path = ctx.out / name
    path.write_text(ctx.header + body)
    ctx.written.append(name)
    return path


def _emit_via(ctx: RunContext, name: str, writer, *args) -> Path:
    """Run a library CSV writer, then stamp the manifest header on top."""
    path = ctx.out / name
    writer(path, *args)
    path.write_text(ctx.header + path.read_text())
    ctx.written.append(name)
    return path


def _write_manifest(ctx: RunContext) -> Path:
    doc = {"command": ctx.command,
           "tool_version": __version__,
           "config_hash": ctx.cfg.config_hash,
           "seed": ctx.cfg.seed,
           "workers": ctx.cfg.workers,
           "out": str(ctx.out),
           "artifacts": list(ctx.written),
           "config": ctx.cfg.echo}
    path = ctx.out / MANIFEST_NAME
    path.write_text(ctx.header + yaml.safe_dump(doc, sort_keys=True))
    return path


# ---------------------------------------------------------------------------
# commands


def cmd_spectroscopy(ctx: RunContext) -> None:
    """Bias scan -> scan.csv, peaks.csv, reconstruction.csv."""
    cfg = ctx.cfg
    problem = cfg.problem
    if cfg.noise.kind not in ("none", "hamiltonian-gaussian"):
        # one disorder realization per run, drawn from the run seed; the
        # reconstruction below is checked against the perturbed instance,
        # i.e. against what was actually scanned
        problem = model.sample_noise(cfg.noise, problem,
                                     np.random.default_rng(cfg.seed))
    scan = spectroscopy.scan_tunneling(
        cfg.backend, problem, cfg.schedule, cfg.params,
        bath=cfg.bath if cfg.backend == "me" else None,
        temperature=cfg.temperature, seed=cfg.seed, n_tau=cfg.sqa_n_tau,
        chi=cfg.langevin_opts.chi, m=cfg.me_truncation,
        me_steps=cfg.me_steps, workers=cfg.workers)
    _emit_via(ctx, "scan.csv", spectroscopy.write_scan_csv, scan)
    _emit_via(ctx, "peaks.csv", spectroscopy.write_peaks_csv, scan)
    rows = spectroscopy.reconstruction_rows(scan, problem, cfg.schedule,
                                            cfg.params.s_star,
                                            temperature=cfg.temperature)
    _emit_via(ctx, "reconstruction.csv",
              spectroscopy.write_reconstruction_csv, rows)


def cmd_thermal_hold(ctx: RunContext) -> None:
    """Equilibrium histogram with the Gibbs-diagonal column -> histogram.csv."""
    cfg = ctx.cfg
    opts = cfg.thermal
    problem = (cfg.problem if opts.h_P is None
               else cfg.problem.with_h_P(opts.h_P))
    A_S, _, B = cfg.schedule.evaluate(cfg.params.s_star)
    A_P = cfg.schedule.evaluate(cfg.params.s_P)[1]
    beta = cfg.beta if opts.beta is None else opts.beta
    n_states = problem.dim
    if beta == 0.0:
        # infinite temperature: every Metropolis move is accepted and the
        # stationary law is uniform over computational states, so sample
        # that limit directly rather than feed the slice couplings a zero
        rng = np.random.default_rng(cfg.seed)
        hist = np.bincount(rng.integers(0, n_states, size=opts.repetitions),
                           minlength=n_states).astype(float)
    else:
        hist = sqa.thermal_hold(problem, problem.amplitudes(A_S, A_P), B,
                                beta, opts.sweeps, opts.repetitions,
                                n_tau=opts.n_tau, seed=cfg.seed,
                                readout_mode=opts.readout)
    frame = spectrum.eigendecompose(
        model.build_hamiltonian(problem, A_S=A_S, A_P=A_P, B=B))
    diag = (np.abs(frame.vectors) ** 2) @ spectrum.gibbs_populations(
        frame.energies, beta)
    freq = hist / hist.sum()
    tv = 0.5 * float(np.abs(freq - diag).sum())
    nq = problem.n_qubits
    lines = ["state,bits,count,frequency,gibbs_diagonal"]
    for idx in range(n_states):
        bits = format(idx, f"0{nq}b")[::-1]  # qubit 1 first, probe last
        lines.append(f"{idx},{bits},{int(round(float(hist[idx])))},"
                     f"{freq[idx]:.12g},{diag[idx]:.12g}")
    lines.append(f"# beta={beta:.12g} sweeps={opts.sweeps} "
                 f"repetitions={opts.repetitions} n_tau={opts.n_tau}")
    lines.append(f"# total_variation={tv:.12g}")
    _emit_text(ctx, "histogram.csv", "\n".join(lines) + "\n")


def _bell_state() -> np.ndarray:
    v = np.zeros(4)
    v[0] = v[3] = 1.0 / np.sqrt(2.0)
    return v


def cmd_entanglement(ctx: RunContext) -> None:
    """Robustness histogram + witness report -> robustness.csv, witness.csv."""
    cfg = ctx.cfg
    if cfg.problem.n_system != 2:
        raise ConfigError("entanglement: the robustness scan and witness "
                          "report are defined for a two-qubit system")
    opts = cfg.entanglement
    A_S, _, B = cfg.schedule.evaluate(cfg.params.s_star)
    result = entanglement.robustness_scan(cfg.problem, A_S, B, cfg.beta,
                                          sigma=opts.sigma,
                                          samples=opts.samples,
                                          seed=cfg.seed, bins=opts.bins)
    _emit_via(ctx, "robustness.csv", entanglement.write_robustness_csv,
              result)

    bell = _bell_state()
    w_bell = entanglement.witness_construct(bell, (1,))
    H = model.build_system_hamiltonian(cfg.problem, A_S, B)
    energies, states = np.linalg.eigh(H)
    w = entanglement.witness_construct(states[:, 0], (1,))
    populations = spectrum.gibbs_populations(energies, cfg.beta)
    lo, hi = entanglement.witness_bound_diagonal(
        w, states, populations, np.full(len(populations), opts.dP))
    rows = [
        ("bell_selftest_expectation",
         float(np.real(np.vdot(bell, w_bell @ bell)))),
        ("bell_selftest_negativity", entanglement.negativity(np.outer(bell, bell), (1,))),
        ("ground_negativity", entanglement.negativity(
            np.outer(states[:, 0], states[:, 0].conj()), (1,))),
        ("ground_witness_expectation",
         float(np.real(np.vdot(states[:, 0], w @ states[:, 0])))),
        ("gibbs_witness_bound_low", lo),
        ("gibbs_witness_bound_high", hi),
        ("robustness_min_negativity", result.min_negativity),
        ("robustness_mean_negativity", result.mean_negativity),
        ("noiseless_negativity", result.noiseless_negativity),
    ]
    lines = ["quantity,value"]
    lines += [f"{name},{value:.12g}" for name, value in rows]
    lines.append(f"# population box half-width dP={opts.dP:g}; the Gibbs "
                 "state is certified entangled when bound_high < 0")
    _emit_text(ctx, "witness.csv", "\n".join(lines) + "\n")


def cmd_langevin(ctx: RunContext) -> None:
    """Hold-time and bias scans of <M_P^z> -> mz_vs_tau.csv, mz_vs_hp.csv."""
    cfg = ctx.cfg
    opts = cfg.langevin_opts
    tau_grid = cfg.params.tau_grid
    h_grid = cfg.params.h_P_grid
    h_fixed = opts.h_P
    if h_fixed is None:
        h_fixed = float(spectroscopy.resonance_positions(
            cfg.problem, cfg.schedule, cfg.params.s_star, n_levels=1)[0])
    tau_fixed = opts.tau_fixed
    if tau_fixed is None:
        tau_fixed = float(np.median(tau_grid))
    seeds = np.random.SeedSequence(cfg.seed).generate_state(
        len(tau_grid) + len(h_grid), dtype=np.uint64)

    def run_one(h_P, tau, seed):
        return langevin.run_protocol_langevin(
            cfg.problem, cfg.schedule, s_star=cfg.params.s_star,
            s_P=cfg.params.s_P, h_P=h_P, tau=tau, chi=opts.chi,
            temperature=cfg.temperature,
            repetitions=cfg.params.repetitions, seed=int(seed),
            leg_time=opts.leg_time)

    mz_tau = np.array([run_one(h_fixed, tau, seeds[j])
                       for j, tau in enumerate(tau_grid)])
    slope, ci_lo, ci_hi = langevin.slope_confidence(tau_grid, mz_tau)
    lines = ["tau,Mz"]
    lines += [f"{tau:.12g},{mz:.12g}" for tau, mz in zip(tau_grid, mz_tau)]
    lines.append(f"# h_P={h_fixed:.12g} chi={opts.chi:g} "
                 f"repetitions={cfg.params.repetitions}")
    lines.append(f"# slope={slope:.12g} ci_low={ci_lo:.12g} "
                 f"ci_high={ci_hi:.12g} contains_zero={ci_lo < 0.0 < ci_hi}")
    _emit_text(ctx, "mz_vs_tau.csv", "\n".join(lines) + "\n")

    mz_h = np.array([run_one(h_P, tau_fixed, seeds[len(tau_grid) + i])
                     for i, h_P in enumerate(h_grid)])
    lines = ["h_P,Mz"]
    lines += [f"{h_P:.12g},{mz:.12g}" for h_P, mz in zip(h_grid, mz_h)]
    lines.append(f"# tau={tau_fixed:.12g} chi={opts.chi:g} "
                 f"repetitions={cfg.params.repetitions}")
    lines.append("# max_second_difference="
                 f"{langevin.max_second_difference(mz_h):.12g}")
    _emit_text(ctx, "mz_vs_hp.csv", "\n".join(lines) + "\n")


_COMMANDS = {
    "spectroscopy": cmd_spectroscopy,
    "thermal-hold": cmd_thermal_hold,
    "entanglement": cmd_entanglement,
    "langevin": cmd_langevin,
}


# ---------------------------------------------------------------------------
# driver


def resolve_out_dir(command: str, cfg: RunConfig) -> Path:
    """--out / config ``out`` / $PROBESPEC_OUT root / current directory."""
    if cfg.out:
        return Path(cfg.out)
    root = os.environ.get(OUT_ENV, ".")
    return Path(root) / f"probespec-{command}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="probespec",
        description="Tunneling-spectroscopy simulation laboratory")
    parser.add_argument("--version", action="version",
                        version=f"probespec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="command")
    helps = {
        "spectroscopy": "probe-bias scan, peak fits, spectrum reconstruction",
        "thermal-hold": "equilibrium histogram vs the Gibbs diagonal",
        "entanglement": "negativity robustness and witness report",
        "langevin": "spin-vector model flat-response scans",
    }
    for name, text in helps.items():
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", metavar="PATH",
                         help="YAML run configuration, or a manifest.yaml "
                              "from a previous run")
        cmd.add_argument("--backend", choices=runconfig.BACKENDS,
                         help="dynamical model (overrides the config)")
        cmd.add_argument("--seed", type=int, help="master RNG seed")
        cmd.add_argument("--workers", type=int,
                         help="worker threads for Monte Carlo grids")
        cmd.add_argument("--out", metavar="DIR", help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = runconfig.load_config(args.config, backend=args.backend,
                                    seed=args.seed, workers=args.workers,
                                    out=args.out)
    except ConfigError as exc:
        print(f"probespec: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = resolve_out_dir(args.command, cfg)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"probespec: cannot create {out}: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    ctx = RunContext(cfg=cfg, command=args.command, out=out,
                     header=_header(cfg, args.command))
    try:
        _COMMANDS[args.command](ctx)
    except ConfigError as exc:
        print(f"probespec: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 -- boundary of the CLI
        traceback.print_exc(file=sys.stderr)
        if ctx.written:
            marker = ctx.header + (
                f"run failed after writing: {', '.join(ctx.written)}\n"
                f"{type(exc).__name__}: {exc}\n")
            (out / FAILED_NAME).write_text(marker)
            print(f"probespec: partial results kept in {out}",
                  file=sys.stderr)
            return EXIT_PARTIAL
        print(f"probespec: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    _write_manifest(ctx)
    for name in ctx.written + [MANIFEST_NAME]:
        print(out / name)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
