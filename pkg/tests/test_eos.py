import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sonicpatch import eos as E


@pytest.fixture(scope="module")
def quad():
    return E.quadratic_eos()


@pytest.fixture(scope="module")
def consts(quad):
    return E.sonic_normalized_constants(quad, 0.5)


@pytest.fixture(scope="module")
def branch(quad, consts):
    return E.SupersonicBranch(quad, consts, 0.6)


# closed forms for p = rho^2/4
def n_exact(rho):
    return 9 * rho / (4 + rho)


def test_reference_constants(quad, consts):
    assert consts.m == pytest.approx(4 / 9, abs=1e-12)
    assert consts.mg_hat == pytest.approx(0.6495190528, abs=1e-10)
    assert consts.q_hat == pytest.approx(0.7292315766, abs=1e-10)
    assert consts.rho_sonic == pytest.approx(0.5, abs=1e-12)
    assert consts.q_sonic == pytest.approx(0.5, abs=1e-12)


def test_number_density_closed_form(quad):
    for rho in (1e-3, 0.1, 0.5, 1.0, 1.9):
        assert E.number_density(quad, rho) == pytest.approx(n_exact(rho), rel=1e-12)


def test_sonic_coefficients(quad, consts):
    s = E.flow_state(quad, consts, 0.5)
    f, F1, _ = E.f_F1_F2(s)
    assert s.M == pytest.approx(1.0, abs=1e-10)
    assert f == pytest.approx(16 / 9, abs=1e-10)
    assert F1 == pytest.approx(7 / 3, abs=1e-10)
    assert E.da_dq(s) == pytest.approx(-0.75, abs=1e-8)
    bs = E.SupersonicBranch(quad, consts, 0.5).at(0.0)
    assert bs.K == pytest.approx(4 / 3, abs=1e-10)
    assert bs.F == pytest.approx(7 / 3, abs=1e-10)


def test_bernoulli_density_closed_form(quad, consts):
    # gamma(q) * i/n = mg_hat with i/n = (4 + rho)^2 / 36
    q = 0.6
    rho = E.bernoulli_density(quad, consts, q)
    assert float(E.lorentz(q)) * (4 + rho) ** 2 / 36 == pytest.approx(consts.mg_hat, abs=1e-12)
    assert rho == pytest.approx(0.32506, abs=1e-5)


def test_limit_speed(quad, consts):
    assert E.limit_speed(quad, consts) == pytest.approx(consts.q_hat, abs=1e-14)
    with pytest.raises(ValueError):
        E.bernoulli_density(quad, consts, consts.q_hat)


@pytest.mark.parametrize("bad, reason", [
    (dict(p=lambda r: 0.5 * r, dp=lambda r: 0.5 + 0 * r, d2p=lambda r: 0 * r), "p'' > 0 violated"),
    (dict(p=lambda r: -r**2, dp=lambda r: -2 * r, d2p=lambda r: -2 + 0 * r), "p' > 0 violated"),
    (dict(p=lambda r: r**2, dp=lambda r: 2 * r, d2p=lambda r: 2 + 0 * r), "p' < 1 violated"),
    (dict(p=lambda r: r**2, dp=lambda r: r, d2p=lambda r: 1 + 0 * r), "dp consistent with p violated"),
])
def test_admissibility_gate(bad, reason):
    with pytest.raises(E.InadmissibleEOS) as exc:
        E.EquationOfState(rho_max=1.0, rho_ref=0.5, name="bad", **bad)
    assert reason in [c.reason for c in exc.value.report.failures()]


def test_linear_eos_rejected():
    with pytest.raises(E.InadmissibleEOS) as exc:
        E.linear_eos(0.5, 1.0, 0.5)
    assert [c.reason for c in exc.value.report.failures()] == ["p'' > 0 violated"]


def test_polytropic_gamma_one_rejected():
    with pytest.raises(ValueError):
        E.polytropic_eos(0.5, 1.0, 0.5)


def test_tabulated_matches_analytic(quad):
    rho = np.linspace(0.0, 1.9, 400)
    tab = E.tabulated_eos(rho, rho**2 / 4, 0.5)
    x = np.linspace(0.05, 1.8, 50)
    assert np.max(np.abs(tab.p(x) - quad.p(x))) < 1e-4
    assert np.max(np.abs(tab.dp(x) - quad.dp(x))) < 1e-3


def test_branch_surrogate_matches_exact(quad, consts, branch):
    for t in (0.0, 0.1, 0.3, 0.55):
        exact = E.state_from_pi(quad, consts, float(np.sqrt(1 - t * t)))
        bs = branch.at(t)
        assert bs.rho == pytest.approx(exact.rho, abs=1e-12)
        assert bs.q == pytest.approx(exact.q, abs=1e-12)
        assert bs.F == pytest.approx(E.F_of_t(quad, consts, t), abs=1e-11)


def test_branch_rejects_out_of_range(branch):
    with pytest.raises(ValueError):
        branch.at(0.7)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.6))
def test_branch_stays_on_bernoulli(branch, t):
    assert float(branch.bernoulli_residual(t)) < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.59), st.floats(1e-4, 1e-2))
def test_branch_supersonic_monotone(branch, t, dt):
    # the flow accelerates and thins as the Mach angle opens
    lo, hi = branch.at(t), branch.at(t + dt)
    assert hi.q > lo.q and hi.rho < lo.rho
    assert hi.q >= hi.a - 1e-15


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.6))
def test_state_roundtrip(quad, consts, q):
    s = E.flow_state(quad, consts, q)
    if s.M > 1:
        assert E.q_from_pi(quad, consts, s.pi_var) == pytest.approx(q, abs=1e-10)
    assert s.i / s.n == pytest.approx((4 + s.rho) ** 2 / 36, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(1.2, 3.0), st.floats(0.05, 0.3))
def test_polytropic_admissible_and_consistent(gamma, kappa):
    eos = E.polytropic_eos(kappa, gamma, 0.1)
    rho = np.linspace(0.1, 0.9, 5) * eos.rho_max
    assert np.all(eos.dp(rho) < 1) and np.all(eos.d2p(rho) > 0)
    # number density solves dn/n = drho/(rho + p)
    h = 1e-6 * eos.rho_max
    for r in rho[1:-1]:
        dn = (E.number_density(eos, r + h) - E.number_density(eos, r - h)) / (2 * h)
        assert dn / E.number_density(eos, r) == pytest.approx(1 / (r + float(eos.p(r))), rel=1e-5)
