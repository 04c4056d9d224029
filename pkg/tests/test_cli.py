import numpy as np
import pytest
import yaml

from probespec import cli, model, runconfig, spectroscopy
from probespec.runconfig import ConfigError


def write_config(path, doc):
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def data_rows(path):
    """CSV rows with the manifest header and trailing comments stripped."""
    lines = [ln for ln in path.read_text().splitlines()
             if ln and not ln.startswith("#")]
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


ME_SMOKE = {
    "backend": "me",
    "seed": 7,
    "protocol": {
        "s_star": 0.339,
        "s_P": 0.85,
        "tau_grid": {"kind": "geom", "lo": 0.01, "hi": 30.0, "points": 5},
        "h_P_grid": {"kind": "linear", "lo": 1.45, "hi": 1.62, "points": 9},
    },
    # skip the Lamb-shift quadrature: peak positions move by well under a
    # grid step and the smoke run stays fast
    "bath": {"lamb_shift": False},
}


# ---------------------------------------------------------------------------
# configuration loading


def test_defaults_resolve_to_the_standard_instance():
    cfg = runconfig.load_config()
    assert cfg.backend == "me"
    assert cfg.problem == model.dimer_instance()
    assert cfg.params.s_P == cfg.params.s_star == 0.339
    assert len(cfg.params.h_P_grid) == 121
    assert len(cfg.params.tau_grid) == 8
    assert cfg.beta == pytest.approx(cfg.bath.beta)


def test_monte_carlo_defaults_use_whole_sweep_ladder():
    cfg = runconfig.load_config(backend="sssv")
    assert np.array_equal(cfg.params.tau_grid, 64.0 * 2.0 ** np.arange(8))
    assert cfg.params.repetitions == spectroscopy.MC_REPETITIONS
    lan = runconfig.load_config(backend="langevin")
    assert lan.params.tau_grid[0] == pytest.approx(3.0)
    assert lan.params.repetitions == 1000


def test_hash_covers_physics_but_not_plumbing(tmp_path):
    base = runconfig.load_config()
    assert runconfig.load_config().config_hash == base.config_hash
    assert runconfig.load_config(seed=9).config_hash != base.config_hash
    assert runconfig.load_config(backend="sqa").config_hash != base.config_hash
    assert runconfig.load_config(workers=8).config_hash == base.config_hash
    assert (runconfig.load_config(out=str(tmp_path)).config_hash
            == base.config_hash)


def test_field_level_messages(tmp_path):
    cases = [
        ({"backend": "exact"}, "backend"),
        ({"protocol": {"s_star": 2.0}}, "protocol.s_star"),
        ({"protocol": {"tau_grid": {"kind": "log"}}}, "protocol.tau_grid.kind"),
        ({"protocol": {"tau_grid": {"kind": "geom", "lo": -1.0, "hi": 2.0,
                                    "points": 4}}}, "protocol.tau_grid"),
        ({"bath": {"coupling_ratio": 0.5}}, "bath"),
        ({"noise": {"kind": "burst"}}, "noise.kind"),
        ({"thermal": {"readout": "mean"}}, "thermal.readout"),
        ({"entanglement": {"dP": 2.0}}, "entanglement.dP"),
        ({"mystery": 1}, "mystery"),
        ({"problem": str(tmp_path / "missing.txt")}, "file not found"),
    ]
    for doc, fragment in cases:
        path = write_config(tmp_path / "bad.yaml", doc)
        with pytest.raises(ConfigError, match=fragment.replace(".", r"\.")):
            runconfig.load_config(path)


def test_sweep_grids_must_survive_rounding(tmp_path):
    path = write_config(tmp_path / "c.yaml", {
        "backend": "sqa",
        "protocol": {"tau_grid": {"values": [10, 10.4, 11, 12]}}})
    with pytest.raises(ConfigError, match="rounding"):
        runconfig.load_config(path)
    # the same grid is legal for a continuous-time backend
    ok = runconfig.load_config(path, backend="me")
    assert ok.params.tau_grid[1] == pytest.approx(10.4)


def test_explicit_grids_and_auto_levels(tmp_path):
    path = write_config(tmp_path / "c.yaml", {
        "protocol": {"h_P_grid": {"kind": "auto", "n_levels": 2,
                                  "points": 31}}})
    cfg = runconfig.load_config(path)
    assert len(cfg.params.h_P_grid) == 31
    res = spectroscopy.resonance_positions(cfg.problem, cfg.schedule, 0.339,
                                           n_levels=2)
    assert cfg.params.h_P_grid[0] < res[0] < res[1] < cfg.params.h_P_grid[-1]


def test_problem_and_schedule_files_round_trip(tmp_path):
    prob = model.ring_instance(4)
    ppath = tmp_path / "ring.txt"
    model.save_problem(prob, ppath)
    spath = tmp_path / "sched.csv"
    model.save_schedule(model.default_schedule(51), spath)
    cfg = runconfig.load_config(write_config(tmp_path / "c.yaml", {
        "problem": str(ppath), "schedule": str(spath)}))
    assert cfg.problem == prob
    assert len(cfg.schedule.s) == 51
    assert cfg.echo["problem"] == str(ppath.resolve())


# ---------------------------------------------------------------------------
# spectroscopy command


@pytest.fixture(scope="module")
def me_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("me_cli")
    cfg = write_config(root / "run.yaml", ME_SMOKE)
    out = root / "out"
    assert cli.main(["spectroscopy", "--config", cfg, "--out", str(out)]) == 0
    return cfg, out


def test_spectroscopy_smoke_writes_three_tables(me_run):
    _, out = me_run
    for name in ("scan.csv", "peaks.csv", "reconstruction.csv",
                 "manifest.yaml"):
        text = (out / name).read_text()
        assert text.startswith("# probespec ")
        assert "# config_hash: " in text
    header, rows = data_rows(out / "scan.csv")
    assert header[0] == "h_P" and len(rows) == 9
    _, peak_rows = data_rows(out / "peaks.csv")
    assert len(peak_rows) >= 1
    # the window brackets the ground resonance; the fitted peak sits on it
    assert float(peak_rows[0][0]) == pytest.approx(1.5378, abs=0.05)
    _, rec_rows = data_rows(out / "reconstruction.csv")
    assert len(rec_rows) == len(peak_rows)


def test_spectroscopy_rerun_is_byte_identical(me_run, tmp_path):
    cfg, out = me_run
    again = tmp_path / "again"
    assert cli.main(["spectroscopy", "--config", cfg,
                     "--out", str(again)]) == 0
    for name in ("scan.csv", "peaks.csv", "reconstruction.csv"):
        assert (again / name).read_bytes() == (out / name).read_bytes()


def test_manifest_reingestion_reproduces_the_run(me_run, tmp_path):
    _, out = me_run
    manifest = yaml.safe_load((out / "manifest.yaml").read_text())
    assert manifest["command"] == "spectroscopy"
    assert manifest["artifacts"] == ["scan.csv", "peaks.csv",
                                     "reconstruction.csv"]
    redo = tmp_path / "redo"
    assert cli.main(["spectroscopy", "--config", str(out / "manifest.yaml"),
                     "--out", str(redo)]) == 0
    assert (redo / "scan.csv").read_bytes() == (out / "scan.csv").read_bytes()
    again = yaml.safe_load((redo / "manifest.yaml").read_text())
    assert again["config_hash"] == manifest["config_hash"]


def test_sssv_default_scan_reports_at_most_one_peak(tmp_path):
    cfg = write_config(tmp_path / "run.yaml", {
        "backend": "sssv",
        "seed": 3,
        "protocol": {
            "s_star": 0.339, "s_P": 0.77,
            "repetitions": 300,
            "tau_grid": {"values": [64, 256, 1024, 4096]},
            "h_P_grid": {"kind": "linear", "lo": 1.1, "hi": 2.1,
                         "points": 11},
        }})
    out = tmp_path / "out"
    assert cli.main(["spectroscopy", "--config", cfg, "--out",
                     str(out)]) == 0
    _, rows = data_rows(out / "peaks.csv")
    assert len(rows) <= 1


def test_worker_flag_leaves_monte_carlo_tables_unchanged(tmp_path):
    cfg = write_config(tmp_path / "run.yaml", {
        "backend": "sssv",
        "seed": 12,
        "protocol": {
            "s_star": 0.339, "s_P": 0.77, "repetitions": 150,
            "tau_grid": {"values": [32, 128, 512, 2048]},
            "h_P_grid": {"kind": "linear", "lo": 1.3, "hi": 1.7,
                         "points": 5},
        }})
    one, four = tmp_path / "w1", tmp_path / "w4"
    assert cli.main(["spectroscopy", "--config", cfg, "--out", str(one),
                     "--workers", "1"]) == 0
    assert cli.main(["spectroscopy", "--config", cfg, "--out", str(four),
                     "--workers", "4"]) == 0
    assert (one / "scan.csv").read_bytes() == (four / "scan.csv").read_bytes()


# ---------------------------------------------------------------------------
# thermal-hold command


def test_thermal_hold_beta_zero_matches_uniform_diagonal(tmp_path):
    cfg = write_config(tmp_path / "run.yaml", {
        "backend": "sqa",
        "seed": 21,
        "thermal": {"repetitions": 800, "beta": 0.0}})
    out = tmp_path / "out"
    assert cli.main(["thermal-hold", "--config", cfg, "--out",
                     str(out)]) == 0
    header, rows = data_rows(out / "histogram.csv")
    assert header == ["state", "bits", "count", "frequency", "gibbs_diagonal"]
    assert len(rows) == 8
    assert sum(int(r[2]) for r in rows) == 800
    gibbs = np.array([float(r[4]) for r in rows])
    np.testing.assert_allclose(gibbs, 0.125, rtol=0, atol=1e-15)
    tv_line = [ln for ln in (out / "histogram.csv").read_text().splitlines()
               if ln.startswith("# total_variation=")]
    assert float(tv_line[0].split("=")[1]) < 0.1


def test_thermal_hold_histogram_tracks_gibbs_at_small_scale(tmp_path):
    cfg = write_config(tmp_path / "run.yaml", {
        "backend": "sqa",
        "seed": 4,
        "protocol": {"s_star": 0.339, "s_P": 0.77},
        "thermal": {"sweeps": 300, "repetitions": 400, "n_tau": 32}})
    out = tmp_path / "out"
    assert cli.main(["thermal-hold", "--config", cfg, "--out",
                     str(out)]) == 0
    _, rows = data_rows(out / "histogram.csv")
    freq = np.array([float(r[3]) for r in rows])
    gibbs = np.array([float(r[4]) for r in rows])
    # both put the bulk of the weight on the all-down state
    assert np.argmax(freq) == np.argmax(gibbs) == 7


# ---------------------------------------------------------------------------
# entanglement command


def test_entanglement_report_certifies_the_gibbs_state(tmp_path):
    cfg = write_config(tmp_path / "run.yaml", {
        "seed": 5,
        "entanglement": {"sigma": 0.1, "samples": 300, "bins": 12}})
    out = tmp_path / "out"
    assert cli.main(["entanglement", "--config", cfg, "--out",
                     str(out)]) == 0
    _, rows = data_rows(out / "witness.csv")
    report = {name: float(value) for name, value in rows}
    assert report["bell_selftest_expectation"] == pytest.approx(-0.5,
                                                                abs=1e-9)
    assert report["bell_selftest_negativity"] == pytest.approx(0.5, abs=1e-9)
    assert report["robustness_min_negativity"] > 0.0
    assert report["gibbs_witness_bound_high"] < 0.0
    assert (report["gibbs_witness_bound_low"]
            <= report["gibbs_witness_bound_high"])
    _, hist_rows = data_rows(out / "robustness.csv")
    assert len(hist_rows) == 12
    assert sum(int(r[2]) for r in hist_rows) == 300


def test_entanglement_rejects_larger_systems(tmp_path):
    ppath = tmp_path / "ring.txt"
    model.save_problem(model.ring_instance(4), ppath)
    cfg = write_config(tmp_path / "run.yaml", {"problem": str(ppath)})
    assert cli.main(["entanglement", "--config", cfg,
                     "--out", str(tmp_path / "out")]) == cli.EXIT_CONFIG


# ---------------------------------------------------------------------------
# langevin command


def test_langevin_scans_emit_slope_and_smoothness(tmp_path):
    cfg = write_config(tmp_path / "run.yaml", {
        "backend": "langevin",
        "seed": 8,
        "protocol": {
            "s_star": 0.339, "s_P": 0.77, "repetitions": 4,
            "tau_grid": {"values": [0.5, 1.0, 2.0, 4.0]},
            "h_P_grid": {"kind": "linear", "lo": 1.0, "hi": 1.4,
                         "points": 3},
        },
        "langevin": {"leg_time": 1.0, "h_P": 1.2}})
    out, redo = tmp_path / "out", tmp_path / "redo"
    assert cli.main(["langevin", "--config", cfg, "--out", str(out)]) == 0
    _, tau_rows = data_rows(out / "mz_vs_tau.csv")
    assert len(tau_rows) == 4
    assert all(-1.0 <= float(r[1]) <= 1.0 for r in tau_rows)
    text = (out / "mz_vs_tau.csv").read_text()
    assert "# slope=" in text and "contains_zero=" in text
    hp_text = (out / "mz_vs_hp.csv").read_text()
    assert "# max_second_difference=" in hp_text
    assert cli.main(["langevin", "--config", cfg, "--out", str(redo)]) == 0
    assert (redo / "mz_vs_tau.csv").read_bytes() == \
        (out / "mz_vs_tau.csv").read_bytes()


# ---------------------------------------------------------------------------
# driver behavior


def test_config_errors_exit_2(tmp_path, capsys):
    cfg = write_config(tmp_path / "bad.yaml", {"protocol": {"s_star": 2.0}})
    assert cli.main(["spectroscopy", "--config", cfg,
                     "--out", str(tmp_path / "out")]) == cli.EXIT_CONFIG
    assert "protocol.s_star" in capsys.readouterr().err


def test_numerical_failure_without_artifacts_exits_3(tmp_path, capsys):
    doc = dict(ME_SMOKE)
    doc["me"] = {"m": 9999}  # truncation larger than the register
    cfg = write_config(tmp_path / "run.yaml", doc)
    out = tmp_path / "out"
    assert cli.main(["spectroscopy", "--config", cfg,
                     "--out", str(out)]) == cli.EXIT_NUMERIC
    assert not (out / "scan.csv").exists()
    assert not (out / cli.FAILED_NAME).exists()


def test_partial_results_keep_a_failed_marker(tmp_path, monkeypatch):
    def boom(path, scan):
        raise RuntimeError("synthetic failure after the scan table")

    monkeypatch.setattr(spectroscopy, "write_peaks_csv", boom)
    cfg = write_config(tmp_path / "run.yaml", ME_SMOKE)
    out = tmp_path / "out"
    assert cli.main(["spectroscopy", "--config", cfg,
                     "--out", str(out)]) == cli.EXIT_PARTIAL
    assert (out / "scan.csv").exists()
    marker = (out / cli.FAILED_NAME).read_text()
    assert "scan.csv" in marker and "synthetic failure" in marker
    assert not (out / cli.MANIFEST_NAME).exists()


def test_environment_variable_sets_the_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path))
    cfg = write_config(tmp_path / "run.yaml", {
        "backend": "sqa", "thermal": {"repetitions": 100, "beta": 0.0}})
    assert cli.main(["thermal-hold", "--config", cfg]) == 0
    assert (tmp_path / "probespec-thermal-hold" / "histogram.csv").exists()


def test_flag_overrides_replace_config_values(tmp_path):
    cfg = write_config(tmp_path / "run.yaml", {"backend": "me", "seed": 1})
    loaded = runconfig.load_config(cfg, backend="sssv", seed=42, workers=3)
    assert loaded.backend == "sssv"
    assert loaded.seed == 42
    assert loaded.workers == 3
    assert loaded.echo["backend"] == "sssv"
