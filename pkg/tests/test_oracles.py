import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robustq.oracles import (
    OracleSpec,
    build_biased_oracle,
    build_signed_oracle,
    random_spec,
    reset_and_read_queries,
)
from robustq.qstate import (
    Operator,
    RegisterLayout,
    apply_controlled_power,
    apply_fourier,
    apply_operator,
    basis_state,
    measurement_distribution,
)


def query_all(O):
    """Answer-register distribution after querying a uniform superposition of indices."""
    layout = O.layout()
    s = apply_fourier(basis_state(layout, (0, 0, 0)), "x", O.spec.N)
    s = apply_operator(s, O.operator())
    joint = measurement_distribution(s, ["x", "ans"])
    return joint / joint.sum(axis=1, keepdims=True)


def test_perfect_clean_oracle_computes_f():
    spec = OracleSpec(4, 2, (0, 1, 1, 0), (0.5,) * 4)
    cond = query_all(build_biased_oracle(spec))
    for x, fx in enumerate(spec.f):
        assert cond[x, fx] == pytest.approx(1, abs=1e-12)


def test_clean_oracle_bias_point_three():
    spec = OracleSpec(2, 2, (0, 1), (0.3, 0.3))
    cond = query_all(build_biased_oracle(spec))
    assert cond[0, 0] == pytest.approx(0.8, abs=1e-12)
    assert cond[1, 1] == pytest.approx(0.8, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_garbage_oracle_answer_probability(seed):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, 4, 3, work_model="garbage")
    O = build_biased_oracle(spec)
    cond = query_all(O)
    for x, fx in enumerate(spec.f):
        assert cond[x, fx] == pytest.approx(0.5 + spec.biases[x], abs=1e-10)
    assert np.allclose(O.answer_probabilities(), 0.5 + np.array(spec.biases), atol=1e-10)


def test_garbage_work_register_carries_junk():
    spec = OracleSpec(2, 3, (0, 1), (0.2, 0.4), "garbage", 11)
    O = build_biased_oracle(spec)
    col = O.column(0).reshape(4, 2)
    assert np.linalg.norm(col[1:]) > 0.1


def test_completion_reproducible_from_spec():
    spec = OracleSpec(2, 3, (1, 0), (0.2, 0.4), "garbage", 5)
    assert np.array_equal(build_biased_oracle(spec).blocks, build_biased_oracle(spec).blocks)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(biases=(0.0, 0.3)),
        dict(biases=(0.6, 0.3)),
        dict(biases=(-0.1, 0.3)),
        dict(f=(0, 2)),
        dict(work_model="noisy"),
    ],
)
def test_spec_validation(kwargs):
    base = dict(N=2, m=2, f=(0, 1), biases=(0.3, 0.3))
    base.update(kwargs)
    with pytest.raises(ValueError):
        OracleSpec(**base)


def test_eps_min():
    assert OracleSpec(3, 1, (0, 0, 1), (0.4, 0.1, 0.2)).eps_min == 0.1


@settings(max_examples=30, deadline=None)
@given(
    st.sampled_from([2, 4, 8]),
    st.sampled_from([1, 2, 3]),
    st.sampled_from(["clean", "garbage"]),
    st.integers(0, 2**32 - 1),
)
def test_realisations_are_unitary(N, m, model, seed):
    spec = random_spec(np.random.default_rng(seed), N, m, work_model=model)
    O = build_biased_oracle(spec)
    assert O.operator().is_unitary()
    assert build_signed_oracle(O).operator().is_unitary()


def test_signed_oracle_examples():
    S = build_signed_oracle(build_biased_oracle(OracleSpec(2, 2, (1, 0), (0.25, 0.5))))
    diag = S.diagonal()
    assert diag[0] == pytest.approx(-0.5, abs=1e-12)
    assert S.residual_norms()[0] == pytest.approx(np.sqrt(0.75), abs=1e-12)
    assert diag[1] == pytest.approx(1.0, abs=1e-12)
    assert S.residual_norms()[1] == pytest.approx(0.0, abs=1e-7)


@settings(max_examples=40, deadline=None)
@given(
    st.sampled_from([2, 4, 8]),
    st.sampled_from([2, 3]),
    st.sampled_from(["clean", "garbage"]),
    st.integers(0, 2**32 - 1),
)
def test_signed_oracle_identity_via_state_vector(N, m, model, seed):
    spec = random_spec(np.random.default_rng(seed), N, m, work_model=model)
    S = build_signed_oracle(build_biased_oracle(spec))
    layout = S.layout()
    eps = np.array(spec.biases)
    sign = (-1.0) ** np.array(spec.f)
    for x in range(N):
        out = apply_operator(basis_state(layout, (x, 0)), S.operator())
        branch = out.tensor()[x]
        assert abs(branch[0] - sign[x] * 2 * eps[x]) < 1e-9
        assert abs(np.linalg.norm(branch[1:]) - np.sqrt(1 - 4 * eps[x] ** 2)) < 1e-9


def test_signed_oracle_pad_is_idle():
    S = build_signed_oracle(build_biased_oracle(OracleSpec(2, 2, (0, 1), (0.3, 0.2), "garbage", 3)))
    blocks = S.blocks.reshape(2, 4, 2, 4, 2)
    assert np.allclose(blocks[:, :, 0, :, 1], 0)
    assert np.allclose(blocks[:, :, 0, :, 0], blocks[:, :, 1, :, 1])


def test_query_counting():
    O = build_biased_oracle(OracleSpec(2, 2, (0, 1), (0.3, 0.3)))
    S = build_signed_oracle(O)
    layout = S.layout()
    s = basis_state(layout, (0, 0))
    s = apply_operator(s, S.operator())
    assert reset_and_read_queries(S) == 2
    assert reset_and_read_queries(O) == 0

    apply_operator(basis_state(O.layout(), (1, 0, 0)), O.operator(), inverse=True)
    assert reset_and_read_queries(O) == 1

    M = 5
    Q = S.operator().inverse().then(S.operator())
    layout = RegisterLayout([("j", 8), ("x", 2), ("ws", S.dim)])
    apply_controlled_power(basis_state(layout, (3, 0, 0)), "j", Q, M)
    assert reset_and_read_queries(O) == 4 * M
    assert reset_and_read_queries(O) == 0


def test_custom_register_names():
    O = build_biased_oracle(OracleSpec(2, 2, (0, 1), (0.3, 0.3)))
    op = O.operator("idx", ("w",))
    layout = RegisterLayout([("idx", 2), ("w", 4)])
    out = apply_operator(basis_state(layout, (1, 0)), op)
    assert measurement_distribution(out, ["w"])[1] == pytest.approx(0.8)
    assert isinstance(op, Operator)
