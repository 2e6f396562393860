import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exflow.modulators import Modulator, make_modulator
from exflow.rng import make_rng, random_spd
from exflow.speed import ConeViolation, PowerMean, SigmaRatioRoot
from exflow.structure import (
    InequalityReport,
    PreconditionError,
    boundary_multiplier,
    boundary_objective,
    check_convexity,
    check_dual_concavity,
    check_inverse_concave_general,
    check_inverse_concave_homog,
    estimate_pinching_constant,
    interior_bracket_closed,
    interior_bracket_grid,
    q_values,
    run_lemma,
    sample_boundary,
    sample_boundary_multiplier,
    sample_interior,
    sample_interior_instances,
    sample_q_monotone,
    sample_scalar,
    theorem_speeds,
    verify_boundary_form,
    verify_interior_inequality,
    verify_q_monotone,
    verify_scalar_psi_convex_regime,
    verify_scalar_psi_iv,
)

IDENT = Modulator("identity")
NEG1 = Modulator("neg_power", 1.0)
INVERSE_PSI = [
    "neg_power:alpha=0.5",
    "neg_power:alpha=1",
    "neg_log_recip",
    "neg_log_ratio",
    "neg_arctan_recip",
    "shifted_exp",
]


def test_report_pass_rule():
    r = InequalityReport("x", 10, -1e-10, {}, 1e-10)
    assert r.passed
    r = InequalityReport("x", 10, -1.01e-10, {}, 1e-10)
    assert not r.passed
    d = r.to_dict()
    assert d["pass"] is False and d["tol"] == 1e-10


# convexity


def test_linear_mean_is_convex_with_zero_slack():
    r = check_convexity(PowerMean(1, 3), trials=2000)
    assert r.passed
    assert abs(r.extra["min_second_form"]) < 1e-12


def test_quadratic_mean_is_convex():
    assert check_convexity(PowerMean(2, 3), trials=10_000).passed


def test_sigma_root_is_not_convex():
    r = check_convexity(SigmaRatioRoot(2, 3), trials=2000)
    assert not r.passed
    assert r.min_slack < -1e-3
    assert r.witness["test"] in ("second_form", "first_order")
    assert r.witness["A"].shape == (3, 3)


def test_convexity_skips_cone_exits():
    r = check_convexity(SigmaRatioRoot(2, 3), trials=500)
    assert r.trials + r.skipped == 500


# inverse concavity


@pytest.mark.parametrize(
    "f, expect",
    [
        (PowerMean(-1, 3), True),
        (PowerMean(1, 3), True),
        (PowerMean(-2, 2), False),
        (PowerMean(-2, 3), False),
        (SigmaRatioRoot(3, 3), True),
        (SigmaRatioRoot(2, 2), True),
        (SigmaRatioRoot(2, 3), True),
    ],
    ids=repr,
)
def test_inverse_concavity_verdicts(f, expect):
    g = check_inverse_concave_general(f, trials=10_000)
    h = check_inverse_concave_homog(f, trials=10_000)
    assert g.passed == expect
    assert h.passed == expect
    # equivalent criteria agree sample by sample
    assert g.extra["verdict_disagreement"] == 0
    assert h.extra["verdict_disagreement"] == 0
    if not expect:
        assert g.min_slack < 0 and g.witness["lambda"].shape == (f.n,)


def test_inverse_concavity_matches_dual_concavity_oracle():
    for f in (PowerMean(-1, 3), PowerMean(-2, 3), PowerMean(2, 3), PowerMean(0.5, 2), SigmaRatioRoot(2, 3)):
        assert check_dual_concavity(f).passed == check_inverse_concave_general(f, 5000).passed, f


# scalar inequalities


def test_scalar_convex_examples():
    a = np.geomspace(0.01, 100, 50)
    b = a[::-1]
    np.testing.assert_array_equal(verify_scalar_psi_convex_regime(IDENT, a, b), 0.0)
    v = verify_scalar_psi_convex_regime(Modulator("sqrt_shift"), 1.0, 2.0)
    assert v == pytest.approx(np.sqrt(5) - np.sqrt(2) - 1 / np.sqrt(2), rel=1e-14)
    assert v == pytest.approx(0.1147476, abs=1e-7)


def test_scalar_iv_examples():
    assert verify_scalar_psi_iv(IDENT, 1.0, 2.0) == pytest.approx(0.5, rel=1e-15)
    rng = make_rng(0, 0)
    a, b = rng.uniform(0.01, 10, (2, 200))
    np.testing.assert_allclose(verify_scalar_psi_iv(IDENT, a, b), (b - a) ** 2 / b, rtol=1e-12, atol=1e-13)
    assert np.max(np.abs(verify_scalar_psi_iv(NEG1, a, b))) < 1e-12 * np.max(1 / a + 1 / b)


@pytest.mark.parametrize("name", ["identity", "sqrt_shift", "softplus", "logcosh_shift"])
def test_scalar_convex_sampled(name):
    assert sample_scalar(make_modulator(name), "convex").passed


@pytest.mark.parametrize("name", INVERSE_PSI)
def test_scalar_iv_sampled(name):
    assert sample_scalar(make_modulator(name), "iv").passed


def test_scalar_iv_negative_control():
    r = sample_scalar(Modulator("neg_power", 2.0), "iv")
    assert not r.passed
    assert set(r.witness) == {"a", "b"}
    assert verify_scalar_psi_iv(Modulator("neg_power", 2.0), r.witness["a"], r.witness["b"]) < 0


def test_scalar_domain():
    with pytest.raises(PreconditionError):
        verify_scalar_psi_iv(IDENT, -1.0, 1.0)


# interior lemma


def test_interior_equal_matrices_zero_slack():
    A, _ = random_spd(make_rng(1, 1), 3, 1)
    assert verify_interior_inequality(PowerMean(-1, 3), NEG1, A[0], A[0], 0.05) == pytest.approx(0.0, abs=1e-13)


def test_interior_preconditions_are_hard_errors():
    A = np.diag([1.0, 2.0])
    B = np.diag([0.5, 3.0])
    f = PowerMean(1, 2)
    with pytest.raises(PreconditionError):
        verify_interior_inequality(f, NEG1, A, B, 0.6)  # lambda_min(B) < k
    with pytest.raises(PreconditionError):
        verify_interior_inequality(f, NEG1, A, B, 0.0)
    with pytest.raises(PreconditionError):
        verify_interior_inequality(f, NEG1, A, np.array([[1.0, 2.0], [0.0, 1.0]]), 0.1)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_interior_sweep(n):
    for f in theorem_speeds(n):
        for name in INVERSE_PSI:
            r = sample_interior(f, make_modulator(name), trials=1000, seed=n)
            assert r.passed, (f, name, r.min_slack)


def test_interior_negative_controls():
    assert not sample_interior(PowerMean(-2, 3), NEG1, trials=10_000).passed
    assert not sample_interior(PowerMean(1, 2), Modulator("neg_power", 2.0), trials=10_000).passed


def test_interior_grid_oracle():
    f = PowerMean(1, 2)
    A, B, k = sample_interior_instances(2, 20, seed=11)
    for j in range(20):
        closed = interior_bracket_closed(f, A[j], B[j], k[j])
        grid, arg, loss = interior_bracket_grid(f, A[j], B[j], k[j])
        assert grid <= closed + 1e-10
        assert closed - grid <= loss


def test_grid_oracle_only_for_n2():
    A, B, k = sample_interior_instances(3, 1, seed=0)
    with pytest.raises(ValueError):
        interior_bracket_grid(PowerMean(1, 3), A[0], B[0], k[0])


def test_q_monotone():
    f = PowerMean(-1, 3)
    A, B, k = sample_interior_instances(3, 5, seed=2)
    for j in range(5):
        assert verify_q_monotone(f, NEG1, A[j], B[j], k[j])
    q = q_values(f, NEG1, A[0], A[0], np.linspace(0, k[0], 11))
    np.testing.assert_allclose(np.diff(q), 0.0, atol=1e-13)
    r = sample_q_monotone(f, NEG1, trials=1000)
    assert r.passed and r.extra["min_q_k_minus_q_0"] >= -1e-10


# boundary lemma


def test_boundary_examples():
    f = PowerMean(1, 2)
    assert verify_boundary_form(f, IDENT, [1.0, 2.0], np.diag([0.0, 1.0])) == pytest.approx(1.0, rel=1e-14)
    assert verify_boundary_form(f, IDENT, [1.0, 2.0], np.zeros((2, 2))) == 0.0


def test_boundary_preconditions():
    f = PowerMean(1, 3)
    with pytest.raises(PreconditionError):
        verify_boundary_form(f, IDENT, [1.0, 1.0, 2.0], np.zeros((3, 3)))
    with pytest.raises(PreconditionError):
        verify_boundary_form(f, IDENT, [1.0, 2.0, 3.0], np.eye(3))
    with pytest.raises(ConeViolation):
        verify_boundary_form(f, IDENT, [-1.0, 2.0, 3.0], np.zeros((3, 3)))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_boundary_sweep(n):
    for f in theorem_speeds(n):
        for name in INVERSE_PSI:
            assert sample_boundary(f, make_modulator(name), trials=1000, seed=n).passed


def test_boundary_negative_controls():
    assert not sample_boundary(PowerMean(-2, 3), NEG1).passed
    assert not sample_boundary(PowerMean(1, 3), Modulator("neg_power", 2.0)).passed


def test_boundary_multiplier_is_optimal():
    for n in (2, 3):
        r = sample_boundary_multiplier(PowerMean(1, n), instances=50, per_instance=500, seed=n)
        assert r.passed


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(-3, 3), st.floats(-3, 3))
def test_boundary_objective_maximized_by_closed_form(seed, dx, dy):
    rng = make_rng(seed, 0)
    lam = np.sort(rng.uniform(0.1, 10, 3))
    B = rng.standard_normal((3, 3))
    B = B + B.T
    B[0, 0] = 0
    f = PowerMean(-1, 3)
    L = boundary_multiplier(lam, B)
    P = L.copy()
    P[1, 1] += dx
    P[2, 2] += dy
    assert boundary_objective(f, lam, B, P) <= boundary_objective(f, lam, B, L) + 1e-10


# pinching constant


def test_pinching_linear_mean():
    r = estimate_pinching_constant(PowerMean(1, 2), C=2.0, samples=200_000)
    assert r["status"] == "ok"
    # harmonic-mean dual: 1 <= 2 * 2 t/(1 + t)  <=>  t >= 1/3
    assert 2.9 < r["estimate"] <= 3.0 + 1e-12
    assert r["dual_vanishes_on_boundary"]


def test_pinching_boundary_decay_fails_for_harmonic_mean():
    r = estimate_pinching_constant(PowerMean(-1, 3), C=3.0, samples=10_000)
    assert not r["dual_vanishes_on_boundary"]
    assert r["boundary_min_dual"] > 0.3


def test_pinching_near_center_ray():
    r = estimate_pinching_constant(PowerMean(1, 3), C=1.001, samples=100_000)
    assert r["estimate"] == pytest.approx(1.0, abs=5e-3)


def test_pinching_infeasible():
    r = estimate_pinching_constant(PowerMean(1, 3), C=0.5, samples=10_000)
    assert r["status"] == "constraint infeasible"
    assert r["estimate"] is None


def test_run_lemma_dispatch():
    assert run_lemma("boundary", PowerMean(1, 2), IDENT, trials=500).passed
    assert run_lemma("scalar-convex", m=Modulator("sqrt_shift"), trials=500).passed
    with pytest.raises(ValueError):
        run_lemma("nope")


def test_determinism():
    a = sample_interior(PowerMean(1, 3), NEG1, trials=500, seed=7)
    b = sample_interior(PowerMean(1, 3), NEG1, trials=500, seed=7)
    assert a.min_slack == b.min_slack
    c = sample_interior(PowerMean(1, 3), NEG1, trials=500, seed=8)
    assert a.min_slack != c.min_slack
