import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fouriermamba import autodiff as ad
from fouriermamba import ssm
from fouriermamba.autodiff import Tensor


def naive_recurrence(A, D, W_B, W_C, W_delta, b_delta, u):
    """Scalar loops over t, c, n; shares nothing with the package besides the math."""
    L, C = u.shape
    N = A.shape[1]
    h = np.zeros((C, N))
    y = np.zeros((L, C))
    for t in range(L):
        Bt = u[t] @ W_B
        Ct = u[t] @ W_C
        for c in range(C):
            pre = sum(u[t, j] * W_delta[j, c] for j in range(C)) + b_delta[c]
            delta = math.log1p(math.exp(pre)) if pre < 30 else pre
            acc = 0.0
            for n in range(N):
                abar = math.exp(delta * A[c, n])
                bbar = (abar - 1.0) / A[c, n] * Bt[n]
                h[c, n] = abar * h[c, n] + bbar * u[t, c]
                acc += Ct[n] * h[c, n]
            y[t, c] = acc + D[c] * u[t, c]
    return y


def random_params(C, N, rng, delta_bias=(-2.0, 0.5)):
    return ssm.SSMParams(
        A=-rng.uniform(0.5, 3.0, size=(C, N)),
        D=rng.normal(size=C),
        W_B=rng.normal(size=(C, N)) / np.sqrt(C),
        W_C=rng.normal(size=(C, N)) / np.sqrt(C),
        W_delta=rng.normal(size=(C, C)) * 0.3,
        b_delta=rng.uniform(*delta_bias, size=C),
    )


def test_zoh_closed_forms():
    Abar, Bbar = ssm.zoh_discretize(-1.0, 1.0, math.log(2))
    assert abs(Abar - 0.5) < 1e-12
    assert abs(Bbar - 0.5) < 1e-12


def test_zoh_small_step_limit():
    Abar, Bbar = ssm.zoh_discretize(np.array([-1.0, -5.0]), np.array([2.0, 3.0]), 1e-8)
    np.testing.assert_allclose(Abar, 1.0, atol=1e-6)
    np.testing.assert_allclose(Bbar, 1e-8 * np.array([2.0, 3.0]), rtol=1e-6)


def test_zoh_rejects_non_positive_step():
    with pytest.raises(ValueError):
        ssm.zoh_discretize(-1.0, 1.0, 0.0)


def test_params_reject_non_negative_a():
    rng = np.random.default_rng(0)
    p = random_params(2, 3, rng)
    with pytest.raises(ValueError):
        ssm.SSMParams(np.zeros((2, 3)), p.D, p.W_B, p.W_C, p.W_delta, p.b_delta)


def test_zero_input_zero_output():
    p = random_params(3, 4, np.random.default_rng(1))
    assert not ssm.selective_scan_seq(p, np.zeros((9, 3))).any()


def test_single_step_by_hand():
    rng = np.random.default_rng(2)
    p = random_params(2, 3, rng)
    u = rng.normal(size=(1, 2))
    delta = np.log1p(np.exp(u[0] @ p.W_delta + p.b_delta))
    Bt, Ct = u[0] @ p.W_B, u[0] @ p.W_C
    h = (np.exp(delta[:, None] * p.A) - 1) / p.A * Bt * u[0][:, None]
    ref = (h * Ct).sum(axis=1) + p.D * u[0]
    np.testing.assert_allclose(ssm.selective_scan_seq(p, u)[0], ref, rtol=1e-13)


def test_matches_naive_loop():
    rng = np.random.default_rng(3)
    p = random_params(3, 4, rng)
    u = rng.normal(size=(3, 3))
    ref = naive_recurrence(p.A, p.D, p.W_B, p.W_C, p.W_delta, p.b_delta, u)
    np.testing.assert_allclose(ssm.selective_scan_seq(p, u), ref, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("L", [1, 7, 64, 1024])
def test_parallel_matches_sequential(L):
    rng = np.random.default_rng(L)
    p = random_params(8, 16, rng)
    u = rng.normal(size=(L, 8))
    seq = ssm.selective_scan_seq(p, u)
    par = ssm.selective_scan_parallel(p, u)
    assert np.abs(par - seq).max() / np.abs(seq).max() < 1e-10


@pytest.mark.parametrize("method", ssm.SCAN_METHODS)
def test_differentiable_scan_matches_reference(method):
    rng = np.random.default_rng(4)
    C, N = 4, 5
    init = ssm.init_seq_transform(C, N, rng)
    init["b_delta"] = rng.uniform(-1.0, 0.5, size=C)
    w = {k: Tensor(v) for k, v in init.items()}
    u = rng.normal(size=(2, 33, C))
    got = ssm.selective_scan(Tensor(u), w, method).data
    ref = ssm.selective_scan_seq(ssm.SSMParams.from_weights(init), u)
    np.testing.assert_allclose(got, ref, rtol=1e-11, atol=1e-13)


def test_stability_over_many_steps():
    rng = np.random.default_rng(5)
    p = random_params(4, 8, rng, delta_bias=(0.0, 2.0))
    u = rng.uniform(-1, 1, size=(10_000, 4))
    Abar, x, _ = ssm._discretize_seq(p, u)
    h = ssm.linear_scan_seq(Abar, x, axis=0)
    bound = np.abs(x).max() / (1.0 - Abar.max())
    assert np.isfinite(h).all()
    assert np.abs(h).max() <= bound


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t=st.integers(0, 20))
def test_seq_transform_is_causal(seed, t):
    rng = np.random.default_rng(seed)
    w = {k: Tensor(v) for k, v in ssm.init_seq_transform(4, 4, rng).items()}
    x = rng.normal(size=(22, 4))
    y = x.copy()
    y[t + 1:] += rng.normal(size=y[t + 1:].shape)
    a = ssm.seq_transform(Tensor(x), w).data
    b = ssm.seq_transform(Tensor(y), w).data
    np.testing.assert_array_equal(a[:t + 1], b[:t + 1])


def test_seq_transform_shape_and_zero_input():
    rng = np.random.default_rng(6)
    init = ssm.init_seq_transform(8, 16, rng)
    init["ln_b"] = rng.normal(size=8)
    w = {k: Tensor(v) for k, v in init.items()}
    assert ssm.seq_transform(Tensor(rng.normal(size=(34, 8))), w).shape == (34, 8)
    out = ssm.seq_transform(Tensor(np.zeros((5, 8))), w).data
    np.testing.assert_allclose(out, np.tile(init["ln_b"], (5, 1)), atol=1e-12)


def test_seq_transform_equals_chained_stages():
    rng = np.random.default_rng(7)
    init = ssm.init_seq_transform(4, 4, rng)
    w = {k: Tensor(v) for k, v in init.items()}
    x = rng.normal(size=(12, 4))
    s = ad.silu(ad.dwconv1d(Tensor(x), w["conv_w"], w["conv_b"])).data
    s = ssm.selective_scan_seq(ssm.SSMParams.from_weights(init), s)
    ref = ad.layernorm(Tensor(s), w["ln_g"], w["ln_b"]).data
    np.testing.assert_allclose(ssm.seq_transform(Tensor(x), w).data, ref, atol=1e-12)


def test_init_follows_conventions():
    init = ssm.init_seq_transform(6, 5, np.random.default_rng(8))
    np.testing.assert_allclose(-np.exp(init["A_log"]), -np.tile(np.arange(1, 6), (6, 1)), rtol=1e-15)
    step = np.log1p(np.exp(init["b_delta"]))
    assert ((step >= 1e-3 - 1e-15) & (step <= 1e-1 + 1e-15)).all()
    np.testing.assert_array_equal(init["D"], 1.0)


def test_scan_gradient_small_instance():
    rng = np.random.default_rng(9)
    L, C, N = 8, 2, 4
    A_log = np.log(rng.uniform(0.5, 2.0, size=(C, N)))
    cot = rng.normal(size=(L, C))

    def f(ts):
        u, d, a, b, c, dd = ts
        return ad.sum_all(ad.mul(ssm.ssm_scan(u, d, ad.neg(ad.exp(a)), b, c, dd, "sequential"), cot))

    err = ad.grad_check(f, [rng.normal(size=(L, C)), rng.uniform(0.5, 2, size=(L, C)), A_log,
                            rng.normal(size=(L, N)), rng.normal(size=(L, N)), rng.normal(size=C)])
    assert err < 1e-4
