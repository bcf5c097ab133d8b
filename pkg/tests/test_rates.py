import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from peerhazard.rates import (
    RateContext,
    Theta,
    adopted_fraction,
    rate,
    rate_grad,
    rate_hess,
)

finite_floats = st.floats(-3, 3, allow_nan=False)


def make_ctx(x, adopted, degree, i=0):
    return RateContext(
        individual=i, adopted_neighbors=frozenset(adopted), covariates=x, degree=degree
    )


def test_theta_validation():
    with pytest.raises(ValueError, match="finite"):
        Theta(beta=[np.nan], delta=0.0)
    with pytest.raises(ValueError, match="finite"):
        Theta(beta=[0.0], delta=np.inf)


def test_theta_vector_round_trip():
    t = Theta(beta=[1.0, -0.5], delta=0.25)
    assert np.array_equal(Theta.from_vector(t.as_vector()).as_vector(), t.as_vector())


def test_theta_json_round_trip():
    t = Theta(beta=[0.3, 2.0], delta=-1.0)
    back = Theta.from_json(t.to_json())
    assert np.array_equal(back.beta, t.beta)
    assert back.delta == t.delta


def test_context_rejects_self_adoption():
    with pytest.raises(ValueError, match="exclude"):
        make_ctx([1.0], adopted={0}, degree=2, i=0)


def test_context_rejects_count_over_degree():
    with pytest.raises(ValueError, match="exceeds"):
        make_ctx([1.0], adopted={1, 2, 3}, degree=2)


def test_dimension_mismatch():
    ctx = make_ctx([1.0, 2.0], adopted=set(), degree=1)
    with pytest.raises(ValueError, match="dimension"):
        rate(ctx, Theta(beta=[1.0], delta=0.0))


def test_degree_zero_fraction_is_zero():
    ctx = make_ctx([1.0], adopted=set(), degree=0)
    assert adopted_fraction(ctx) == 0.0
    assert rate(ctx, Theta(beta=[0.7], delta=5.0)) == pytest.approx(np.exp(0.7))


def test_rate_closed_form():
    ctx = make_ctx([1.0, -2.0], adopted={3, 4}, degree=4)
    theta = Theta(beta=[0.5, 0.25], delta=1.0)
    expected = np.exp(1.0 * 0.5 - 2.0 * 0.25 + 0.5 * 1.0)
    assert rate(ctx, theta) == pytest.approx(expected, rel=1e-14)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(finite_floats, min_size=1, max_size=3),
    st.lists(finite_floats, min_size=1, max_size=3),
    finite_floats,
    st.integers(min_value=0, max_value=5),
    st.integers(min_value=5, max_value=8),
)
def test_rate_positive_and_monotone_in_delta(x, beta_raw, delta, n_adopted, degree):
    beta = beta_raw[: len(x)] + [0.0] * (len(x) - len(beta_raw))
    adopted = set(range(1, n_adopted + 1))
    ctx = make_ctx(x, adopted, degree)
    theta = Theta(beta=beta, delta=delta)
    r = rate(ctx, theta)
    assert r > 0
    if n_adopted > 0:
        r_hi = rate(ctx, Theta(beta=beta, delta=delta + 0.5))
        assert r_hi > r


def test_set_to_count_reduction():
    x = [0.3, -0.1]
    theta = Theta(beta=[1.0, 2.0], delta=0.8)
    r1 = rate(make_ctx(x, {1, 2}, degree=4), theta)
    r2 = rate(make_ctx(x, {3, 4}, degree=4), theta)
    assert r1 == r2


def test_grad_and_hess_match_finite_differences():
    rng = np.random.default_rng(7)
    for _ in range(10):
        x = rng.normal(size=2)
        ctx = make_ctx(x, {1}, degree=3)
        v = rng.normal(size=3) * 0.5
        theta = Theta.from_vector(v)
        g = rate_grad(ctx, theta)
        H = rate_hess(ctx, theta)
        h = 1e-6
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            fd = (
                rate(ctx, Theta.from_vector(v + e))
                - rate(ctx, Theta.from_vector(v - e))
            ) / (2 * h)
            assert g[j] == pytest.approx(fd, rel=1e-6, abs=1e-8)
            fd2 = (
                rate_grad(ctx, Theta.from_vector(v + e))
                - rate_grad(ctx, Theta.from_vector(v - e))
            ) / (2 * h)
            np.testing.assert_allclose(H[:, j], fd2, rtol=1e-5, atol=1e-8)


def test_hessian_psd_rank_one():
    ctx = make_ctx([0.5, 1.5], {1, 2}, degree=2)
    H = rate_hess(ctx, Theta(beta=[0.2, -0.3], delta=0.4))
    assert np.allclose(H, H.T)
    eigs = np.linalg.eigvalsh(H)
    assert eigs.min() >= -1e-12
    assert np.linalg.matrix_rank(H) == 1
