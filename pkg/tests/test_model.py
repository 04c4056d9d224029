import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from probespec import model
from oracles import kron_hamiltonian

RNG = np.random.default_rng


def test_units_at_operating_point():
    u = model.PhysicalUnits(temperature_K=0.0125)
    assert u.thermal_energy_GHz == pytest.approx(0.260458, abs=5e-7)
    assert u.beta == pytest.approx(1.0 / 0.260458, rel=1e-5)
    assert model.PhysicalUnits(temperature_K=0.0).beta == np.inf


def test_hamiltonian_matches_kron_oracle():
    prob = model.dimer_instance(h_P=1.03)
    H = model.build_hamiltonian(prob, A_S=2.0, A_P=2.0, B=4.0)
    H_ref = kron_hamiltonian(2, [0.0, 0.0], [(1, 2, -2.5)], -1.8, 1.03,
                             A_S=2.0, A_P=2.0, B=4.0)
    assert np.abs(H - H_ref).max() < 1e-12


def test_hamiltonian_matches_kron_oracle_ring():
    prob = model.ring_instance(n=4, h_P=0.7)
    H = model.build_hamiltonian(prob, A_S=1.3, A_P=0.2, B=2.1)
    H_ref = kron_hamiltonian(4, [0.0] * 4, list(prob.couplings), -1.8, 0.7,
                             A_S=1.3, A_P=0.2, B=2.1)
    assert np.abs(H - H_ref).max() < 1e-12


def test_decoupled_probe_reproduces_single_qubit_levels():
    # h_1 = 1 with all couplings off: spectrum is {-1, +1} on the system factor
    prob = model.IsingProblem(n_system=1, h=(1.0,), couplings=(), J_1P=0.0, h_P=0.0)
    H = model.build_hamiltonian(prob, A_S=0.0, A_P=0.0, B=1.0)
    assert np.allclose(np.sort(np.linalg.eigvalsh(H)), [-1.0, -1.0, 1.0, 1.0])


def test_pure_transverse_qubit_gap():
    prob = model.IsingProblem(n_system=1, h=(0.0,), couplings=())
    Hs = model.build_system_hamiltonian(prob, A_S=1.0, B=0.0)
    w = np.linalg.eigvalsh(Hs)
    assert np.allclose(w, [-1.0, 1.0])
    assert w[1] - w[0] == pytest.approx(2.0)


def test_probe_up_sector_is_shifted_system_spectrum():
    # with A_P = 0 the probe-up block (probe bit 0, MSB) carries H_S - B h_P
    prob = model.dimer_instance(h_P=0.73)
    B, A_S = 3.7, 1.9
    H = model.build_hamiltonian(prob, A_S=A_S, A_P=0.0, B=B)
    n = prob.n_system
    up = H[: 2 ** n, : 2 ** n]
    assert np.abs(H[: 2 ** n, 2 ** n:]).max() == 0.0
    w_up = np.linalg.eigvalsh(up)
    w_sys = np.linalg.eigvalsh(model.build_system_hamiltonian(prob, A_S, B))
    assert np.allclose(w_up, w_sys - B * prob.h_P, atol=1e-10)


def test_probe_down_sector_matches_offset_hamiltonian():
    prob = model.dimer_instance(h_P=0.4)
    B, A_S = 2.2, 0.9
    H = model.build_hamiltonian(prob, A_S=A_S, A_P=0.0, B=B)
    n = prob.n_system
    down = H[2 ** n:, 2 ** n:]
    ref = model.build_probe_down_hamiltonian(prob, A_S, B) + B * prob.h_P * np.eye(2 ** n)
    assert np.abs(down - ref).max() < 1e-12


def test_bit_convention_all_ones_is_all_spins_down():
    # all-ones index: every sigma^z = -1; FM dimer bond energy J*(+1)
    prob = model.dimer_instance(h_P=0.0)
    diag = model.ising_diagonal(prob)
    # state |111>: J_S(+1) + J_1P(+1) - J_1P(-1) = -2.5 + 2*(-1.8)
    assert diag[-1] == pytest.approx(-2.5 + 2 * (-1.8))
    # state |000>: J_S(+1) + J_1P - J_1P - h_P = -2.5
    assert diag[0] == pytest.approx(-2.5)


def test_full_fields_fold_in_probe_terms():
    prob = model.dimer_instance(h_P=1.03)
    f = prob.full_fields()
    assert np.allclose(f, [1.8, 0.0, -1.03])
    assert prob.probe_offset_on_qubit1 == pytest.approx(1.8)
    cps = prob.full_couplings()
    assert (0, 2, -1.8) in cps


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=1, max_value=4), st.integers(min_value=0, max_value=2 ** 31),
       st.floats(0.0, 3.0), st.floats(0.0, 3.0), st.floats(0.0, 5.0))
def test_hamiltonian_is_real_symmetric(n, seed, A_S, A_P, B):
    rng = RNG(seed)
    cps = tuple((i, j, float(rng.normal())) for i in range(1, n + 1)
                for j in range(i + 1, n + 1) if rng.random() < 0.5)
    prob = model.IsingProblem(n_system=n, h=tuple(rng.normal(size=n)),
                              couplings=cps, J_1P=float(rng.normal()), h_P=float(rng.normal()))
    H = model.build_hamiltonian(prob, A_S, A_P, B)
    assert np.abs(H - H.T).max() == 0.0
    assert np.isrealobj(H)


def test_problem_validation():
    with pytest.raises(ValueError):
        model.IsingProblem(n_system=2, h=(0.0,), couplings=())
    with pytest.raises(ValueError):
        model.IsingProblem(n_system=2, h=(0.0, 0.0), couplings=((1, 3, 1.0),))
    with pytest.raises(ValueError):
        model.IsingProblem(n_system=2, h=(0.0, 0.0),
                           couplings=((1, 2, 1.0), (2, 1, 0.5)))
    with pytest.raises(ValueError):
        model.IsingProblem(n_system=12, h=(0.0,) * 12, couplings=())


def test_problem_file_round_trip(tmp_path):
    prob = model.IsingProblem(n_system=3, h=(0.125, -0.3, 0.0441717171),
                              couplings=((1, 2, -2.5), (2, 3, 0.333333333333)),
                              J_1P=-1.8, h_P=1.0321)
    path = tmp_path / "instance.txt"
    model.save_problem(prob, path)
    back = model.load_problem(path)
    assert back == prob  # exact, including float repr round-trip


def test_problem_file_rejects_malformed(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("n_system 2\nh 1 zero\n")
    with pytest.raises(ValueError):
        model.load_problem(path)


# -- schedules ---------------------------------------------------------------


def test_default_schedule_endpoints():
    sch = model.default_schedule()
    A0, AP0, B0 = sch.evaluate(0.0)
    A1, AP1, B1 = sch.evaluate(1.0)
    assert (A0, AP0, B0) == pytest.approx((30.0, 30.0, 0.0))
    assert (A1, AP1, B1) == pytest.approx((0.0, 0.0, 12.0))


def test_schedule_interpolation_is_monotone_between_nodes():
    sch = model.default_schedule(nodes=41)
    s = np.linspace(0.0, 1.0, 5000)
    A_S, A_P, B = sch.evaluate(s)
    assert np.all(np.diff(A_S) <= 1e-9)
    assert np.all(np.diff(A_P) <= 1e-9)
    assert np.all(np.diff(B) >= -1e-9)
    assert np.all(A_S >= -1e-12)


def test_linear_schedule_matches_interp():
    s_nodes = np.array([0.0, 0.3, 1.0])
    sch = model.AnnealSchedule(s=s_nodes, A_S=np.array([4.0, 1.0, 0.0]),
                               A_P=np.array([2.0, 2.0, 0.0]),
                               B=np.array([0.0, 5.0, 6.0]), kind="linear")
    assert sch.evaluate(0.15)[0] == pytest.approx(np.interp(0.15, s_nodes, [4.0, 1.0, 0.0]))


def test_schedule_eval_rejects_out_of_range():
    sch = model.default_schedule()
    with pytest.raises(ValueError):
        sch.evaluate(-0.01)
    with pytest.raises(ValueError):
        sch.evaluate(1.0001)


def test_schedule_validation():
    s = np.array([0.0, 0.5, 1.0])
    with pytest.raises(ValueError):  # increasing A
        model.AnnealSchedule(s=s, A_S=np.array([1.0, 2.0, 0.0]),
                             A_P=np.zeros(3), B=np.array([0.0, 1.0, 2.0]))
    with pytest.raises(ValueError):  # decreasing B
        model.AnnealSchedule(s=s, A_S=np.array([2.0, 1.0, 0.0]),
                             A_P=np.zeros(3), B=np.array([0.0, 2.0, 1.0]))
    with pytest.raises(ValueError):  # nodes must span [0, 1]
        model.AnnealSchedule(s=np.array([0.1, 1.0]), A_S=np.array([1.0, 0.0]),
                             A_P=np.zeros(2), B=np.array([0.0, 1.0]))


def test_schedule_file_round_trip(tmp_path):
    sch = model.default_schedule(nodes=11)
    path = tmp_path / "sched.csv"
    model.save_schedule(sch, path)
    text = path.read_text()
    assert text.startswith("# synthetic\n")
    back = model.load_schedule(path)
    assert back.provenance == "synthetic"
    assert np.array_equal(back.s, sch.s)
    assert np.array_equal(back.A_S, sch.A_S)
    assert np.array_equal(back.B, sch.B)


# -- noise -------------------------------------------------------------------


def test_noise_none_and_zero_alpha_are_identity():
    prob = model.dimer_instance()
    spec = model.NoiseSpec(kind="none")
    assert model.sample_noise(spec, prob, RNG(0)) == prob
    assert model.apply_alpha_shift(prob, 0.0) == prob
    spec = model.NoiseSpec(kind="alpha-shift", alpha_values=(0.0,))
    assert model.sample_noise(spec, prob, RNG(1)) == prob


def test_alpha_shift_is_uniform_over_system_fields():
    prob = model.IsingProblem(n_system=3, h=(0.1, -0.2, 0.3), couplings=())
    shifted = model.apply_alpha_shift(prob, 0.25)
    assert shifted.h == pytest.approx((0.35, 0.05, 0.55))
    assert shifted.h_P == prob.h_P and shifted.J_1P == prob.J_1P


def test_ice_probe_only_leaves_system_untouched():
    prob = model.dimer_instance()
    spec = model.NoiseSpec(kind="ice-probe-only", sigma=0.1)
    pert = model.sample_noise(spec, prob, RNG(7))
    assert pert.h == prob.h and pert.couplings == prob.couplings
    assert pert.h_P != prob.h_P and pert.J_1P != prob.J_1P


def test_ice_all_perturbs_everything_with_matching_std():
    prob = model.dimer_instance()
    spec = model.NoiseSpec(kind="ice-all", sigma=0.1)
    rng = RNG(123)
    draws = np.array([model.sample_noise(spec, prob, rng).h_P - prob.h_P
                      for _ in range(100_000)])
    assert abs(draws.std() - 0.1) < 0.001  # within 1% of sigma
    assert abs(draws.mean()) < 0.002


def test_hamiltonian_gaussian_returns_five_alphas():
    spec = model.NoiseSpec(kind="hamiltonian-gaussian", sigma=0.1)
    out = model.sample_noise(spec, model.dimer_instance(), RNG(5))
    assert isinstance(out, np.ndarray) and out.shape == (5,)


def test_noise_is_reproducible_for_fixed_seed():
    prob = model.dimer_instance()
    spec = model.NoiseSpec(kind="ice-all", sigma=0.05)
    a = model.sample_noise(spec, prob, RNG(42))
    b = model.sample_noise(spec, prob, RNG(42))
    assert a == b
