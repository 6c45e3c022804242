import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tensorslice.decompose import (
    CompressionPlan,
    DecompositionError,
    InfeasibleCompressionError,
    MpoLayer,
    PlanEntry,
    TuckerConv,
    balanced_factor,
    bond_dim_for_cr,
    mpo_decompose,
    mpo_forward,
    mpo_to_matrix,
    param_count,
    tucker_decompose,
    tucker_param_count,
    tucker_ranks_for_cr,
    tucker_to_kernel,
)


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


# -- MPO -----------------------------------------------------------------------

def test_mpo_identity_full_bond():
    m = mpo_decompose(np.eye(4), (2, 2), (2, 2), [4])
    np.testing.assert_allclose(mpo_to_matrix(m), np.eye(4), atol=1e-10)


def test_mpo_random_full_bond_roundtrip():
    w = np.random.default_rng(0).standard_normal((16, 16))
    m = mpo_decompose(w, (4, 4), (4, 4), [16])
    assert rel(mpo_to_matrix(m), w) < 1e-9


def test_mpo_truncation_matches_discarded_energy():
    w = np.random.default_rng(1).standard_normal((16, 16))
    m = mpo_decompose(w, (4, 4), (4, 4), [4])
    err2 = np.linalg.norm(mpo_to_matrix(m) - w) ** 2
    # oracle: singular values of the first split (rows = (i1, j1), cols = (i2, j2))
    t = w.reshape(4, 4, 4, 4).transpose(0, 2, 1, 3).reshape(16, 16)
    s = np.linalg.svd(t, compute_uv=False)
    assert err2 == pytest.approx(np.sum(s[4:] ** 2), rel=1e-8)


def test_mpo_three_sites_roundtrip():
    w = np.random.default_rng(2).standard_normal((8, 27))
    m = mpo_decompose(w, (2, 2, 2), (3, 3, 3), [6, 6])
    assert m.bonds == (6, 6)
    assert rel(mpo_to_matrix(m), w) < 1e-9


def test_mpo_single_core_is_reshape():
    core = np.random.default_rng(3).standard_normal((1, 3, 5, 1))
    m = MpoLayer((core,), (3,), (5,))
    np.testing.assert_array_equal(mpo_to_matrix(m), core.reshape(3, 5))
    x = np.random.default_rng(4).standard_normal((2, 3))
    np.testing.assert_allclose(mpo_forward(m, x), x @ core.reshape(3, 5), atol=1e-14)


def test_mpo_zero_cores_give_zero_matrix():
    cores = (np.zeros((1, 2, 2, 3)), np.zeros((3, 2, 2, 1)))
    assert not mpo_to_matrix(MpoLayer(cores, (2, 2), (2, 2))).any()


def test_mpo_forward_matches_materialized_matrix():
    rng = np.random.default_rng(5)
    cores = (rng.standard_normal((1, 3, 2, 4)), rng.standard_normal((4, 4, 5, 1)))
    m = MpoLayer(cores, (3, 4), (2, 5), rng.standard_normal(10))
    x = rng.standard_normal((3, 12))
    np.testing.assert_allclose(mpo_forward(m, x), x @ mpo_to_matrix(m) + m.bias, atol=1e-10)


def test_mpo_forward_zero_input_gives_bias():
    w = np.random.default_rng(6).standard_normal((4, 6))
    b = np.arange(6.0)
    m = mpo_decompose(w, (2, 2), (2, 3), [4], bias=b)
    np.testing.assert_allclose(mpo_forward(m, np.zeros((3, 4))), np.tile(b, (3, 1)), atol=1e-14)


def test_mpo_bad_dims():
    with pytest.raises(DecompositionError):
        mpo_decompose(np.zeros((4, 4)), (2, 3), (2, 2), [2])
    with pytest.raises(DecompositionError):
        mpo_decompose(np.zeros((4, 4)), (2, 2), (2, 2), [])
    with pytest.raises(DecompositionError):
        mpo_decompose(np.zeros((4, 4)), (2, 2), (2, 2), [0])


def test_mpo_bond_is_clamped_to_attainable_rank():
    m = mpo_decompose(np.random.default_rng(7).standard_normal((4, 4)), (2, 2), (2, 2), [50])
    assert m.bonds == (4,)


@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**16))
@settings(max_examples=40, deadline=None)
def test_mpo_full_bond_roundtrip_property(i1, i2, j1, j2, seed):
    w = np.random.default_rng(seed).standard_normal((i1 * i2, j1 * j2))
    m = mpo_decompose(w, (i1, i2), (j1, j2), [min(i1 * j1, i2 * j2)])
    assert rel(mpo_to_matrix(m), w) < 1e-9


@given(st.integers(2, 4), st.integers(2, 4), st.data())
@settings(max_examples=40, deadline=None)
def test_mpo_error_monotone_in_bond(i, j, data):
    w = np.random.default_rng(data.draw(st.integers(0, 999))).standard_normal((i * i, j * j))
    errs = [np.linalg.norm(mpo_to_matrix(mpo_decompose(w, (i, i), (j, j), [chi])) - w)
            for chi in range(1, i * j + 1)]
    assert all(a >= b - 1e-10 for a, b in zip(errs, errs[1:]))


# -- rate arithmetic -----------------------------------------------------------

def test_bond_dim_examples():
    assert bond_dim_for_cr(4, 4, 4, 4, 0.5) == math.floor(0.5 * 256 / 32) == 4
    assert bond_dim_for_cr(4, 4, 4, 4, 0.999999) == 1
    chi = bond_dim_for_cr(2, 2, 2, 2, 0.5)
    assert chi == 1
    assert 1 - (4 * chi + 4 * chi) / 16 == 0.5


def test_bond_dim_rejects_bad_rate():
    with pytest.raises(ValueError):
        bond_dim_for_cr(2, 2, 2, 2, 1.0)
    with pytest.raises(ValueError):
        bond_dim_for_cr(2, 2, 2, 2, 0)


def test_balanced_factor_examples():
    assert balanced_factor(1024) == (32, 32)
    assert balanced_factor(12) == (3, 4)
    assert balanced_factor(7) == (1, 7)


@given(st.integers(1, 5000))
def test_balanced_factor_is_closest_divisor_pair(n):
    a, b = balanced_factor(n)
    assert a * b == n and a <= b
    best = max(d for d in range(1, math.isqrt(n) + 1) if n % d == 0)
    assert a == best


@given(st.integers(1, 8), st.integers(1, 8), st.integers(1, 8), st.integers(1, 8),
       st.floats(0.05, 0.95))
def test_bond_dim_respects_budget_when_not_clamped(i1, j1, i2, j2, cr):
    s1, s2 = i1 * j1, i2 * j2
    chi = bond_dim_for_cr(i1, j1, i2, j2, cr)
    assert 1 <= chi <= min(s1, s2)
    if chi > 1:
        assert chi * (s1 + s2) <= (1 - cr) * s1 * s2 + 1e-9


def test_tucker_ranks_examples():
    assert tucker_ranks_for_cr((8, 8, 3, 3), 0) == (8, 8)
    with pytest.raises(InfeasibleCompressionError):
        tucker_ranks_for_cr((2, 2, 1, 1), 0.999)


def test_tucker_ranks_against_exhaustive_search():
    shape, cr = (8, 8, 3, 3), 0.5
    budget = (1 - cr) * 8 * 8 * 9
    feasible = [
        (r1, r2) for r1 in range(1, 9) for r2 in range(1, 9)
        if tucker_param_count(shape, r1, r2) <= budget and abs(r1 * 8 - r2 * 8) <= 8
    ]
    best = max(feasible, key=lambda r: (tucker_param_count(shape, *r), -abs(r[0] - r[1]), r[0]))
    assert tucker_ranks_for_cr(shape, cr) == best == (5, 4)


@given(st.integers(1, 16), st.integers(1, 16), st.sampled_from([1, 3]), st.sampled_from([0.3, 0.5, 0.7]))
@settings(max_examples=80, deadline=None)
def test_tucker_ranks_fit_budget_and_are_optimal(s1, s2, k, cr):
    shape = (s1, s2, k, k)
    budget = (1 - cr) * s1 * s2 * k * k
    try:
        r = tucker_ranks_for_cr(shape, cr)
    except InfeasibleCompressionError:
        assert tucker_param_count(shape, 1, 1) > budget
        return
    p = tucker_param_count(shape, *r)
    assert p <= budget
    band = [(a, b) for a in range(1, s1 + 1) for b in range(1, s2 + 1)
            if abs(a * s2 - b * s1) <= max(s1, s2) and tucker_param_count(shape, a, b) <= budget]
    assert p == max(tucker_param_count(shape, *x) for x in band)


# -- Tucker ----------------------------------------------------------------------

def test_tucker_full_rank_roundtrip():
    k = np.random.default_rng(8).standard_normal((8, 6, 3, 3))
    assert rel(tucker_to_kernel(tucker_decompose(k, 8, 6)), k) < 1e-9


def test_tucker_rank_one_exact():
    rng = np.random.default_rng(9)
    a, b, g = rng.standard_normal(5), rng.standard_normal(4), rng.standard_normal((3, 3))
    k = np.einsum("o,i,hw->oihw", a, b, g)
    t = tucker_decompose(k, 1, 1)
    assert t.ranks == (1, 1)
    assert rel(tucker_to_kernel(t), k) < 1e-12


def test_tucker_error_monotone_in_ranks():
    k = np.random.default_rng(10).standard_normal((8, 8, 3, 3))
    err = {(a, b): np.linalg.norm(tucker_to_kernel(tucker_decompose(k, a, b)) - k)
           for a in range(1, 9) for b in range(1, 9)}
    for a, b in err:
        if a < 8:
            assert err[(a + 1, b)] <= err[(a, b)] + 1e-10
        if b < 8:
            assert err[(a, b + 1)] <= err[(a, b)] + 1e-10


def test_tucker_identity_factors_and_zero_core():
    core = np.random.default_rng(11).standard_normal((3, 2, 3, 3))
    t = TuckerConv(core, np.eye(3), np.eye(2))
    np.testing.assert_array_equal(tucker_to_kernel(t), core)
    z = TuckerConv(np.zeros((2, 2, 3, 3)), np.ones((4, 2)), np.ones((3, 2)))
    assert not tucker_to_kernel(z).any()


def test_tucker_factors_are_orthonormal():
    t = tucker_decompose(np.random.default_rng(12).standard_normal((8, 6, 3, 3)), 4, 3)
    np.testing.assert_allclose(t.factor_out.T @ t.factor_out, np.eye(4), atol=1e-10)
    np.testing.assert_allclose(t.factor_in.T @ t.factor_in, np.eye(3), atol=1e-10)


@given(st.integers(1, 6), st.integers(1, 6), st.sampled_from([1, 2, 3]), st.integers(0, 999))
@settings(max_examples=40, deadline=None)
def test_tucker_full_rank_property(s1, s2, k, seed):
    kern = np.random.default_rng(seed).standard_normal((s1, s2, k, k))
    assert rel(tucker_to_kernel(tucker_decompose(kern, s1, s2)), kern) < 1e-9


# -- counts and plans ---------------------------------------------------------------

def test_param_count_examples():
    m = mpo_decompose(np.random.default_rng(13).standard_normal((16, 16)), (4, 4), (4, 4), [4])
    assert param_count(m) == 16 * 4 + 16 * 4 == 128
    assert param_count(np.zeros((16, 16))) == 256
    t = tucker_decompose(np.random.default_rng(14).standard_normal((8, 8, 3, 3)), 4, 4)
    assert param_count(t) == 4 * 4 * 9 + 32 + 32 == 208


def test_plan_yaml_roundtrip(tmp_path):
    plan = CompressionPlan((
        PlanEntry(2, "tucker", ranks=(4, 3)),
        PlanEntry(0, "skip"),
        PlanEntry(5, "mpo", in_dims=(4, 4), out_dims=(2, 8), bonds=(3,)),
    ), target_cr=0.5)
    plan.dump(tmp_path / "plan.yaml")
    back = CompressionPlan.load(tmp_path / "plan.yaml")
    assert back == plan
    assert [e.layer for e in back.entries] == [0, 2, 5]
    assert set(back.active()) == {2, 5}
    assert [e.layer for e in back.restricted(1, 5).entries] == [2]


def test_plan_rejects_duplicates_and_unknown_methods():
    with pytest.raises(ValueError):
        CompressionPlan((PlanEntry(1, "skip"), PlanEntry(1, "skip")))
    with pytest.raises(ValueError):
        PlanEntry.from_dict({"layer": 0, "method": "cp"})


def test_tucker_ranks_stay_in_band_for_small_shapes():
    for s1, s2 in itertools.product(range(2, 7), repeat=2):
        r = tucker_ranks_for_cr((s1, s2, 3, 3), 0.3)
        assert abs(r[0] * s2 - r[1] * s1) <= max(s1, s2)
