import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import brute_prox, random_prox_case, rho

from robust_rrr.linalg import svd
from robust_rrr.penalty import (
    PenaltySpec,
    penalty_of_matrix,
    penalty_of_singular_values,
    penalty_value,
    scalar_prox,
    spectral_prox,
)

FAMILIES = ("mcp", "scad", "nuclear")
zs = st.floats(-20, 20, allow_nan=False)
lams = st.floats(1e-3, 3.0)


def spec_strategy():
    return st.one_of(
        st.builds(lambda lam, eta: PenaltySpec("mcp", lam, eta), lams, st.floats(1.01, 8.0)),
        st.builds(lambda lam, eta: PenaltySpec("scad", lam, eta), lams, st.floats(2.01, 8.0)),
        st.builds(lambda lam: PenaltySpec("nuclear", lam), lams),
    )


def test_spec_validation():
    assert PenaltySpec("mcp", 1.0).eta == 3.0
    assert PenaltySpec("scad", 1.0).eta == 3.7
    assert PenaltySpec("NUCL", 1.0).family == "nuclear"
    with pytest.raises(ValueError):
        PenaltySpec("mcp", -1.0)
    with pytest.raises(ValueError):
        PenaltySpec("lasso", 1.0)
    for family, bound in (("mcp", 1.0), ("scad", 2.0)):
        with pytest.raises(ValueError):
            PenaltySpec(family, 1.0, bound)
        with pytest.raises(ValueError):
            PenaltySpec(family, 1.0, bound + 1e-7)
        PenaltySpec(family, 1.0, bound + 1e-5)
    assert PenaltySpec("nuclear", 1.0, 0.5).family == "nuclear"


def test_penalty_value_examples():
    for family in FAMILIES:
        assert penalty_value(0.0, PenaltySpec(family, 1.3)) == 0.0
    assert penalty_value(10.0, PenaltySpec("mcp", 1.0, 3.0)) == pytest.approx(1.5)
    assert penalty_value(10.0, PenaltySpec("scad", 1.0, 3.7)) == pytest.approx(2.35)
    assert penalty_value(2.0, PenaltySpec("nuclear", 0.5)) == 1.0
    with pytest.raises(ValueError):
        penalty_value(-1.0, PenaltySpec("mcp", 1.0))


@pytest.mark.parametrize("family", FAMILIES)
def test_penalty_value_matches_integral_form(family):
    spec = PenaltySpec(family, 0.8, 3.3)
    t = np.linspace(0, 5, 501)
    np.testing.assert_allclose(penalty_value(t, spec), rho(t, family, 0.8, 3.3), rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("family", ["mcp", "scad"])
def test_penalty_continuity_at_knots(family):
    spec = PenaltySpec(family, 1.2, 3.5)
    for knot in (spec.lam, spec.eta * spec.lam):
        lo, hi = penalty_value(knot - 1e-9, spec), penalty_value(knot + 1e-9, spec)
        assert abs(lo - hi) < 1e-8


@given(spec=spec_strategy(), a=st.floats(0, 30), b=st.floats(0, 30))
def test_penalty_non_decreasing_and_flat(spec, a, b):
    lo, hi = min(a, b), max(a, b)
    assert penalty_value(lo, spec) <= penalty_value(hi, spec) + 1e-12
    if spec.family != "nuclear" and lo > spec.eta * spec.lam:
        assert penalty_value(lo, spec) == penalty_value(hi, spec)


def test_scalar_prox_examples():
    mcp = PenaltySpec("mcp", 1.0, 3.0)
    scad = PenaltySpec("scad", 1.0, 3.7)
    assert scalar_prox(0.5, mcp) == 0.0
    assert scalar_prox(2.0, mcp) == pytest.approx(1.5)
    assert scalar_prox(5.0, mcp) == 5.0
    assert scalar_prox(1.5, scad) == pytest.approx(0.5)
    assert scalar_prox(3.0, scad) == pytest.approx((2.7 * 3 - 3.7) / 1.7)
    assert scalar_prox(3.0, scad) == pytest.approx(2.5882, abs=1e-4)
    assert scalar_prox(-2.0, PenaltySpec("nuclear", 0.5)) == -1.5


@pytest.mark.parametrize(
    "z,family,lam,eta",
    [(2.0, "mcp", 1.0, 3.0), (1.5, "scad", 1.0, 3.7), (3.0, "scad", 1.0, 3.7), (-2.0, "nuclear", 0.5, 3.0)],
)
def test_scalar_prox_examples_against_grid_oracle(z, family, lam, eta):
    assert scalar_prox(z, PenaltySpec(family, lam, eta)) == pytest.approx(brute_prox(z, family, lam, eta), abs=1e-4)


def test_scale_multiplies_lambda_only():
    spec = PenaltySpec("scad", 2.0, 3.7)
    for z in (-7.0, -1.1, 0.3, 2.5, 4.0, 9.0):
        assert scalar_prox(z, spec, scale=0.5) == scalar_prox(z, spec.with_lambda(1.0))


@pytest.mark.parametrize("family", FAMILIES)
def test_scalar_prox_random_oracle(family):
    rng = np.random.default_rng(42)
    for _ in range(100):
        z, lam, eta = random_prox_case(rng, family)
        got = scalar_prox(z, PenaltySpec(family, lam, eta))
        assert got == pytest.approx(brute_prox(z, family, lam, eta), abs=1e-4)


@pytest.mark.parametrize("family", ["mcp", "scad"])
def test_zone_boundaries_value_equivalent(family):
    spec = PenaltySpec(family, 1.0, 3.7)
    knots = [1.0, 3.7] + ([2.0] if family == "scad" else [])
    for k in knots:
        for z in (k, -k):
            at = scalar_prox(z, spec)
            near = scalar_prox(np.nextafter(z, np.sign(z) * np.inf), spec)
            assert abs(at - near) < 1e-9


@given(spec=spec_strategy(), z=zs)
def test_firm_threshold_sandwich(spec, z):
    soft = scalar_prox(z, PenaltySpec("nuclear", spec.lam))
    x = scalar_prox(z, spec)
    assert abs(soft) <= abs(x) + 1e-12
    assert abs(x) <= abs(z) + 1e-12


@given(spec=spec_strategy(), z=zs)
def test_unbiased_zone(spec, z):
    if spec.family != "nuclear" and abs(z) > spec.eta * spec.lam:
        assert scalar_prox(z, spec) == z


@given(spec=spec_strategy(), a=zs, b=zs)
def test_prox_odd_and_monotone(spec, a, b):
    assert scalar_prox(-a, spec) == -scalar_prox(a, spec)
    lo, hi = min(a, b), max(a, b)
    assert scalar_prox(lo, spec) <= scalar_prox(hi, spec)


def test_spectral_prox_examples():
    mcp = PenaltySpec("mcp", 1.0, 3.0)
    B, s = spectral_prox(np.zeros((3, 2)), mcp)
    np.testing.assert_array_equal(B, 0.0)
    np.testing.assert_array_equal(s, 0.0)
    M = np.random.default_rng(0).standard_normal((4, 3))
    B, _ = spectral_prox(M, PenaltySpec("mcp", 0.0, 3.0))
    np.testing.assert_allclose(B, M, atol=1e-13)
    B, s = spectral_prox(np.diag([5.0, 2.0, 0.5]), mcp)
    np.testing.assert_allclose(B, np.diag([5.0, 1.5, 0.0]), atol=1e-13)
    np.testing.assert_allclose(s, [5.0, 1.5, 0.0])


@settings(max_examples=40, deadline=None)
@given(spec=spec_strategy(), m=st.integers(1, 8), n=st.integers(1, 8), seed=st.integers(0, 2**31 - 1))
def test_spectral_prox_shrinks(spec, m, n, seed):
    M = 2 * np.random.default_rng(seed).standard_normal((m, n))
    s_in = svd(M).singular_values
    B, s_out = spectral_prox(M, spec)
    assert np.all(s_out <= s_in + 1e-12)
    rank_in = int(np.sum(s_in > 1e-10 * max(s_in[0], 1e-300)))
    assert np.linalg.matrix_rank(B) <= rank_in
    np.testing.assert_allclose(svd(B).singular_values, s_out, atol=1e-10)


def test_penalty_of_matrix_examples():
    assert penalty_of_matrix(np.zeros((3, 3)), PenaltySpec("mcp", 1.0)) == 0.0
    rng = np.random.default_rng(1)
    u, v = rng.standard_normal(4), rng.standard_normal(3)
    R = 10 * np.outer(u / np.linalg.norm(u), v / np.linalg.norm(v))
    assert penalty_of_matrix(R, PenaltySpec("mcp", 1.0, 3.0)) == pytest.approx(1.5)
    assert penalty_of_matrix(np.diag([2.0, 3.0]), PenaltySpec("nuclear", 1.0)) == pytest.approx(5.0)


def test_scaled_penalty():
    s = np.array([4.0, 1.0, 0.2])
    spec = PenaltySpec("mcp", 1.0, 3.0)
    expected = float(np.sum(rho(s, "mcp", 0.5, 3.0))) / 0.5
    assert penalty_of_singular_values(s, spec, scale=0.5) == pytest.approx(expected)
    nuc = PenaltySpec("nuclear", 0.7)
    assert penalty_of_singular_values(s, nuc, scale=0.3) == pytest.approx(0.7 * s.sum())
