import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from exflow.modulators import (
    BOTH_REGIMES,
    CONVEX_REGIME,
    CONVEX_THEOREM_FAMILIES,
    INVERSE_CONCAVE_REGIME,
    INVERSE_CONCAVE_THEOREM_FAMILIES,
    NO_REGIME,
    DomainError,
    Modulator,
    check_conditions,
    classify_regime,
    ddpsi,
    dpsi,
    log_grid,
    make_modulator,
    psi,
    regime_tracks,
)
from exflow.names import UnknownNameError

CONVEX_LIST = ["identity", "sqrt_shift", "softplus", "logcosh_shift"]
INVERSE_LIST = [
    "neg_power:alpha=0.5",
    "neg_power:alpha=1",
    "neg_log_recip",
    "neg_log_ratio",
    "neg_arctan_recip",
    "shifted_exp",
]
ALL = CONVEX_LIST + INVERSE_LIST + ["neg_power:alpha=2"]
GRID = log_grid()


def _fd5(fun, s, h):
    return (-fun(s + 2 * h) + 8 * fun(s + h) - 8 * fun(s - h) + fun(s - 2 * h)) / (12 * h)


def test_grid_defaults():
    assert GRID.size == 200
    assert GRID[0] == pytest.approx(1e-3) and GRID[-1] == pytest.approx(1e3)


def test_examples():
    assert psi(make_modulator("sqrt_shift"), 0.75) == pytest.approx(1.25, rel=1e-15)
    m = make_modulator("neg_power:alpha=1")
    assert psi(m, 2.0) == pytest.approx(-0.5)
    assert dpsi(m, 2.0) == pytest.approx(0.25)
    assert ddpsi(m, 2.0) == pytest.approx(-0.25)
    ident = make_modulator("identity")
    np.testing.assert_array_equal(dpsi(ident, GRID), 1.0)
    np.testing.assert_array_equal(ddpsi(ident, GRID), 0.0)


@pytest.mark.parametrize("name", ALL)
def test_derivatives_match_finite_differences(name):
    m = make_modulator(name)
    h = 1e-3 * GRID
    d1, d2 = m.dpsi(GRID), m.ddpsi(GRID)
    fd1 = _fd5(m.psi, GRID, h)
    fd2 = _fd5(m.dpsi, GRID, h)
    # error relative to the derivative, floored at 1e-6 of its natural scale
    scale1 = np.maximum(np.abs(d1), 1e-6 * np.abs(m.psi(GRID)) / GRID)
    scale2 = np.maximum(np.abs(d2), 1e-6 * np.abs(d1) / GRID)
    assert np.max(np.abs(fd1 - d1) / scale1) <= 1e-6
    assert np.max(np.abs(fd2 - d2) / scale2) <= 1e-6


@pytest.mark.parametrize("name", ALL)
def test_positive_derivative(name):
    assert np.all(make_modulator(name).dpsi(GRID) > 0)


@pytest.mark.parametrize("name", ALL)
def test_domain_error(name):
    m = make_modulator(name)
    for bad in (0.0, -1.0, np.nan):
        with pytest.raises(DomainError):
            m.psi(bad)
    with pytest.raises(DomainError):
        m.dpsi([1.0, -2.0])


def test_check_conditions_examples():
    rep = check_conditions(make_modulator("sqrt_shift"))
    assert rep.holds("i", "iia", "iiia")
    assert not rep.flags["iib"].holds

    rep = check_conditions(make_modulator("neg_power:alpha=0.5"))
    assert rep.holds("i", "iib", "iiib", "iv")

    rep = check_conditions(make_modulator("neg_power:alpha=2"), grid=[1.0])
    flag = rep.flags["iv"]
    assert not flag.holds
    assert flag.witness_s == 1.0
    assert flag.value == pytest.approx(-2.0, rel=1e-14)


def test_neg_power_two_fails_iv_on_full_grid():
    flag = check_conditions(make_modulator("neg_power:alpha=2")).flags["iv"]
    assert not flag.holds
    s = flag.witness_s
    assert s == GRID[0]  # smallest violating s
    assert flag.value == pytest.approx(-2.0 * s**-3, rel=1e-12)


def test_identity_satisfies_both_with_equality():
    rep = check_conditions(make_modulator("identity"))
    assert all(f.holds for f in rep.flags.values())


def test_neg_power_one_exact_equality_in_iv_is_accepted():
    assert check_conditions(make_modulator("neg_power:alpha=1")).holds("iv")


@pytest.mark.parametrize("name", CONVEX_LIST)
def test_convex_list_sign_structure(name):
    m = make_modulator(name)
    assert np.all(m.dpsi(GRID) * GRID - m.psi(GRID) <= 1e-12 * np.maximum(1, np.abs(m.psi(GRID))))
    assert np.all(m.ddpsi(GRID) >= 0)
    assert np.all(m.psi(GRID) > 0)  # positivity remark
    assert check_conditions(m).holds("i", "iia", "iiia")


@pytest.mark.parametrize("name", INVERSE_LIST)
def test_inverse_list_sign_structure(name):
    m = make_modulator(name)
    rep = check_conditions(m)
    assert rep.holds("i", "iib", "iiib", "iv")
    # s -> Psi'(s) s^2 non-decreasing under (iv)
    w = m.dpsi(GRID) * GRID**2
    assert np.all(np.diff(w) >= -1e-12 * np.abs(w[1:]))


@pytest.mark.parametrize("name", ALL)
def test_iia_and_iib_not_both_violated(name):
    rep = check_conditions(make_modulator(name))
    assert rep.flags["iia"].holds or rep.flags["iib"].holds


def test_shifted_exp_is_sign_changing():
    m = make_modulator("shifted_exp")
    v = m.psi(GRID)
    assert v.min() < 0 < v.max()


def test_classify_regime():
    ident = make_modulator("identity")
    assert classify_regime(ident, True, True) == BOTH_REGIMES  # f = kappa on curves
    assert classify_regime(ident, True, False) == CONVEX_REGIME
    assert classify_regime(make_modulator("sqrt_shift"), True, False) == CONVEX_REGIME
    assert classify_regime(make_modulator("sqrt_shift"), True, True) == CONVEX_REGIME
    assert classify_regime(make_modulator("neg_power:alpha=1"), False, True) == INVERSE_CONCAVE_REGIME
    assert classify_regime(make_modulator("neg_power:alpha=2"), True, True) == NO_REGIME
    assert classify_regime(make_modulator("sqrt_shift"), False, True) == NO_REGIME


def test_regime_tracks():
    assert regime_tracks(BOTH_REGIMES) == (True, True)
    assert regime_tracks(CONVEX_REGIME) == (True, False)
    assert regime_tracks(INVERSE_CONCAVE_REGIME) == (False, True)
    assert regime_tracks(NO_REGIME) == (False, False)


def test_family_lists_cover_config_names():
    assert set(CONVEX_THEOREM_FAMILIES) == {n.split(":")[0] for n in CONVEX_LIST}
    assert set(INVERSE_CONCAVE_THEOREM_FAMILIES) == {n.split(":")[0] for n in INVERSE_LIST}


def test_bad_names():
    for name in ("cubic", "neg_power", "sqrt_shift:alpha=1"):
        with pytest.raises(UnknownNameError):
            make_modulator(name)
    with pytest.raises(ValueError):
        Modulator("neg_power", -1.0)


def test_report_serialization():
    d = check_conditions(make_modulator("shifted_exp")).to_dict()
    assert list(d["conditions"]) == ["i", "iia", "iib", "iiia", "iiib", "iv"]
    assert d["conditions"]["iia"]["status"] == "violated"
    assert d["grid"] == {"points": 200, "min": 1e-3, "max": 1e3, "spacing": "log"}


def test_neg_log_ratio_small_s_is_smooth():
    m = make_modulator("neg_log_ratio")
    s = np.geomspace(1e-8, 1e-1, 400)
    # -log(1+s)/s -> -1 + s/2 - s^2/3
    np.testing.assert_allclose(m.psi(s[:50]), -1 + s[:50] / 2 - s[:50] ** 2 / 3, atol=1e-12)
    assert np.all(np.diff(m.psi(s)) > 0)


@given(st.floats(1e-3, 1e3), st.floats(0.05, 1.0))
def test_neg_power_conditions_pointwise(s, alpha):
    m = Modulator("neg_power", alpha)
    assert m.ddpsi(s) * s + 2 * m.dpsi(s) >= -1e-12 * (abs(m.ddpsi(s) * s) + 2 * m.dpsi(s))
    assert m.dpsi(s) * s - m.psi(s) >= 0
