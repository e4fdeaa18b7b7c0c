import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from robustq.oracles import OracleSpec, build_biased_oracle, random_spec, reset_and_read_queries
from robustq.robustify import (
    TARGET_SUCCESS,
    lemma_one_parameters,
    queries_per_simulation,
    rotation_R,
    schedule_from_estimate,
    schedule_from_level,
    simulate_one_sixth,
    success_probability,
)
from robustq.qstate import apply_fourier, basis_state

# (eps, M1, M2) frozen from an independent evaluation of the ceiling formulas
PARAMETERS = [
    (0.5, 25, 2),
    (0.3, 61, 2),
    (0.25, 75, 3),
    (0.2, 95, 3),
    (0.15, 129, 4),
    (0.1, 194, 5),
    (0.075, 260, 7),
]


@pytest.mark.parametrize("eps, M1, M2", PARAMETERS)
def test_parameters(eps, M1, M2):
    theta, m1, m2 = lemma_one_parameters(eps)
    assert math.sin(theta) == pytest.approx(2 * eps)
    assert (m1, m2) == (M1, M2)
    assert queries_per_simulation(eps) == 4 * (M1 + M2 + 1)


@pytest.mark.parametrize("eps", [0.0, -0.1, 0.51])
def test_parameters_reject_bad_bias(eps):
    with pytest.raises(ValueError):
        lemma_one_parameters(eps)


def test_schedule_examples():
    s = schedule_from_estimate(math.pi / 6, 10)
    assert (s.m_star, s.theta_star, s.p_star) == (1, pytest.approx(math.pi / 6), pytest.approx(0.25))
    s = schedule_from_estimate(math.pi / 2, 10)
    assert (s.m_star, s.theta_star, s.p_star) == (0, pytest.approx(math.pi / 2), pytest.approx(1.0))
    s = schedule_from_estimate(math.pi / 100, 10)
    assert (s.m_star, s.m_clamped) == (25, 10)
    s = schedule_from_estimate(0.0, 7)
    assert s.m_star is None and s.m_clamped == 7


@given(st.integers(1, 400), st.data())
def test_level_schedule_agrees_with_angle_schedule(M, data):
    k = data.draw(st.integers(1, M // 2)) if M >= 2 else 1
    if 2 * k > M:
        return
    a = schedule_from_level(k, M, 1000)
    b = schedule_from_estimate(math.pi * k / M, 1000)
    assert a.m_star == b.m_star
    # the round count is the smallest with (2m+1) theta~ >= pi/2
    m = a.m_star
    assert (2 * m + 1) * math.pi * k / M >= math.pi / 2 - 1e-12
    assert m == 0 or (2 * m - 1) * math.pi * k / M < math.pi / 2


def test_schedule_star_angle_bounds():
    for M in (25, 61, 129):
        for k in range(1, M // 2 + 1):
            s = schedule_from_level(k, M, 10**6)
            assert 0 < s.theta_star <= math.pi / 2
            assert s.theta_star <= s.theta_tilde + 1e-12
            assert s.p_star <= s.p_tilde + 1e-12


def test_rotation_examples():
    assert np.allclose(rotation_R(0.3, 0.3) @ [1, 0], [1, 0])
    assert np.allclose(rotation_R(0.25, 0.5) @ [1, 0], [2**-0.5, 2**-0.5])
    assert np.allclose(rotation_R(0.9, 0.5), np.eye(2))
    assert np.allclose(rotation_R(0.9, 0.0), np.eye(2))
    R = rotation_R(0.1, 0.7)
    assert np.allclose(R.T @ R, np.eye(2))


def test_simulate_rejects_bad_bias():
    O = build_biased_oracle(OracleSpec(2, 2, (0, 1), (0.3, 0.3)))
    with pytest.raises(ValueError):
        simulate_one_sixth(O, 0.0)
    with pytest.raises(ValueError):
        simulate_one_sixth(O, 0.6)


def test_clean_pair_success():
    O = build_biased_oracle(OracleSpec(2, 2, (0, 1), (0.3, 0.3)))
    S = simulate_one_sixth(O, 0.3)
    p = S.success_probabilities()
    assert np.all(p >= TARGET_SUCCESS - 1e-9)
    for x in range(2):
        assert success_probability(S, x) == pytest.approx(p[x], abs=1e-12)
    with pytest.raises(ValueError):
        success_probability(S, 2)


def test_perfect_oracle_success():
    O = build_biased_oracle(OracleSpec(2, 2, (1, 0), (0.5, 0.5)))
    S = simulate_one_sixth(O, 0.5)
    gammas = S.branch_gammas()
    weights = S.estimate_weights()
    p = S.success_probabilities()
    # the final success is sum_j |delta_j|^2 (1 + gamma_j) / 2
    predicted = np.nansum(weights * (1 + np.nan_to_num(gammas)) / 2, axis=1)
    assert np.allclose(p, predicted, atol=1e-10)
    good = S.good_window()
    assert np.nanmin(np.where(good, gammas, np.nan)) >= math.sqrt(8 / 9) - 1e-9
    assert np.all(p >= 0.78)
    assert np.all(p >= TARGET_SUCCESS)


def test_query_count_matches_counter():
    O = build_biased_oracle(OracleSpec(2, 2, (0, 1), (0.15, 0.2)))
    S = simulate_one_sixth(O, 0.15)
    assert (S.M1, S.M2) == (129, 4)
    reset_and_read_queries(O)
    S.run()
    assert reset_and_read_queries(O) == 4 * (129 + 4 + 1) == S.queries_per_application
    state = S.run()
    reset_and_read_queries(O)
    S.inverse(state)
    assert reset_and_read_queries(O) == S.queries_per_application


def test_inverse_restores_input():
    spec = OracleSpec(2, 3, (1, 0), (0.35, 0.22), "garbage", 8)
    S = simulate_one_sixth(build_biased_oracle(spec), 0.2)
    start = apply_fourier(basis_state(S.layout(), {}), "x", 2)
    back = S.inverse(S.apply(start))
    assert np.max(np.abs(back.amplitudes - start.amplitudes)) < 1e-10


@pytest.mark.parametrize("model", ["clean", "garbage"])
@pytest.mark.parametrize("seed", range(3))
def test_gamma_bound_on_good_branches(model, seed):
    rng = np.random.default_rng(seed)
    eps = [0.3, 0.2, 0.15][seed]
    spec = random_spec(rng, 2, 2, lo=eps, hi=0.5, work_model=model)
    S = simulate_one_sixth(build_biased_oracle(spec), eps)
    gammas = S.branch_gammas()
    assert np.nanmax(np.abs(gammas - S.direct_gammas())) < 1e-9
    good = S.good_window()
    assert np.all(S.estimate_weights()[good].reshape(-1) >= 0)
    assert np.all((S.estimate_weights() * good).sum(axis=1) >= 8 / np.pi**2 - 1e-9)
    assert np.nanmin(np.where(good, gammas, np.nan)) >= math.sqrt(8 / 9) - 1e-9
    assert np.all(S.success_probabilities() >= TARGET_SUCCESS - 1e-9)


def test_good_branches_never_hit_the_cap():
    spec = OracleSpec(3, 1, (0, 1, 1), (0.15, 0.31, 0.5))
    S = simulate_one_sixth(build_biased_oracle(spec), 0.15)
    good = S.good_window()
    for x, j in zip(*np.nonzero(good)):
        sched = S.schedules[j]
        assert sched.m_star is not None and sched.m_star <= S.M2


def test_contract_violation_can_fail():
    # eps passed above the smallest true bias voids the guarantee
    spec = OracleSpec(1, 1, (1,), (0.02,))
    S = simulate_one_sixth(build_biased_oracle(spec), 0.5)
    assert S.success_probabilities()[0] < TARGET_SUCCESS


def test_rotation_is_load_bearing():
    spec = OracleSpec(1, 1, (1,), (math.sin(1.2) / 2,))
    O = build_biased_oracle(spec)
    assert simulate_one_sixth(O, 0.3).success_probabilities()[0] >= TARGET_SUCCESS
    assert simulate_one_sixth(O, 0.3, rotate=False).success_probabilities()[0] < TARGET_SUCCESS


def test_halving_eps_about_doubles_queries():
    for eps in (0.3, 0.15):
        ratio = queries_per_simulation(eps / 2) / queries_per_simulation(eps)
        assert 1.8 <= ratio <= 2.6
