import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from sonicpatch import boundary as B
from sonicpatch import eos as E


@pytest.fixture(scope="module")
def eos_consts():
    eos = E.quadratic_eos()
    return eos, E.sonic_normalized_constants(eos, 0.5)


def failing(report):
    return [c.name for c in report.failures()]


def test_reference_arc_validates(ref):
    rep = B.validate_streamline(ref.spec, ref.eos, ref.consts)
    assert rep.passed, failing(rep)


@pytest.mark.parametrize("phi, pihat, expected", [
    ([1.0, -0.5, -0.25], [1.0, -0.3], "phi' > 0"),
    ([1.0, 0.5, -0.25], [1.0, 0.0], "pihat' < 0"),
    ([1.0, 0.5, 0.25], [1.0, -0.3], "phi'' < 0"),
    ([1.0, 0.5, -0.25], [0.9, -0.3], "pihat(x1) = 1"),
])
def test_violations_named(eos_consts, phi, pihat, expected):
    spec = B.StreamlineSpec.from_polynomials(phi, pihat, 0.0, 0.4)
    rep = B.validate_streamline(spec, *eos_consts)
    assert not rep.passed
    assert expected in failing(rep)


def test_coupling_not_evaluated_after_failure(eos_consts):
    spec = B.StreamlineSpec.from_polynomials([1.0, 0.5, -0.25], [1.0, 0.0], 0.0, 0.4)
    cond = B.validate_streamline(spec, *eos_consts).conditions[-1]
    assert cond.name == "streamline coupling < 0" and not cond.passed
    assert "not evaluated" in cond.reason


def test_boundary_identities(ref):
    x = np.linspace(ref.spec.x1, ref.spec.x3, 200)
    b, c, d = B.bcd_hat(ref.spec, ref.branch, x)
    t = ref.spec.t_of_x(x)
    assert np.max(np.abs((b - c) + 2 * t * d)) < 1e-10
    b1, c1, d1 = B.bcd_hat(ref.spec, ref.branch, ref.spec.x1)
    assert abs(b1 - c1) < 1e-12
    assert b1 == pytest.approx(0.178885438, abs=1e-9)
    assert d1 == pytest.approx(0.0574988908, abs=1e-9)


def test_flow_angle_at_sonic_point(ref):
    assert B.theta_hat(ref.spec, 0.0) == pytest.approx(np.arctan(0.5), abs=1e-12)
    assert B.theta_hat(ref.spec, 0.0) == pytest.approx(0.46365, abs=1e-5)


def test_potential_slope_and_image(ref):
    hb = ref.hb
    assert hb.t0 == pytest.approx(0.47497, abs=1e-5)
    assert hb.psi0 == pytest.approx(0.221293, abs=1e-6)
    # psi_tilde' from the composed series against the closed form
    t = np.linspace(0.01, 0.45, 40)
    assert np.max(np.abs(hb.dpsi_tilde(t) - hb.dpsi_tilde_formula(t))) < 1e-10
    # slope coefficient at the sonic point: q sqrt(1 + phi'^2) / |pihat'|
    assert float(hb.dpsi_tilde_formula(1e-8) / 1e-8) == pytest.approx(0.5 * np.sqrt(1.25) / 0.3, rel=1e-8)


def test_inverse_maps(ref):
    hb = ref.hb
    x = np.linspace(hb.x1, hb.x3, 25)
    psi = hb.psi_of_x(x)
    assert np.max(np.abs(hb.x_of_psi(psi) - x)) < 1e-12
    t = hb.t_of_x(x)
    assert np.max(np.abs(hb.x_of_t(t) - x)) < 1e-12
    tp = hb.t_of_psi(psi)
    assert np.max(np.abs(hb.psi_tilde(tp) - psi)) < 1e-14
    # psi_tilde ~ t^2 at the sonic point, so t itself is only sqrt(eps)-determined there
    assert np.max(np.abs(tp - t)[1:]) < 1e-12


def test_data_at_matches_bcd(ref):
    hb = ref.hb
    t = np.linspace(0.0, 0.45, 30)
    W, Z, r, th, L, x = hb.data_at(t)
    b, c, d = B.bcd_hat(ref.spec, ref.branch, x)
    assert np.allclose(W, b, atol=1e-13) and np.allclose(Z, c, atol=1e-13)
    assert np.allclose(L, -d, atol=1e-13)
    assert np.allclose(r, ref.spec.phi(x)) and np.allclose(th, np.arctan(ref.spec.dphi(x)))


def test_boundary_data_bounds(ref):
    assert ref.data.m0_hat == pytest.approx(0.0574989, abs=1e-7)
    assert ref.data.M0_hat == pytest.approx(0.334347, abs=1e-6)
    assert (ref.data.phi_min, ref.data.phi_max) == pytest.approx((1.0, 1.16))


arcs = st.tuples(st.floats(0.2, 1.0), st.floats(-0.5, -0.05), st.floats(0.1, 0.5), st.floats(0.2, 0.5))


@settings(max_examples=15, deadline=None)
@given(arcs)
def test_identities_on_admissible_arcs(eos_consts, arc):
    slope, curv, mach, x3 = arc
    assume(slope + 2 * curv * x3 > 0.05)
    spec = B.StreamlineSpec.from_polynomials([1.0, slope, curv], [1.0, -mach], 0.0, x3)
    assume(B.validate_streamline(spec, *eos_consts, n=256).passed)
    branch = B._branch_for(spec, *eos_consts, n=256)
    x = np.linspace(0.0, x3, 64)
    b, c, d = B.bcd_hat(spec, branch, x)
    t = spec.t_of_x(x)
    assert np.max(np.abs((b - c) + 2 * t * d)) < 1e-10
    # the coupling hypothesis makes all three boundary quantities positive
    assert np.all(b > 0) and np.all(c > 0) and np.all(d > 0)
    hb = B.hodograph_boundary(spec, branch)
    tt = np.linspace(0.02, 0.95 * hb.t0, 16)
    assert np.max(np.abs(hb.dpsi_tilde(tt) - hb.dpsi_tilde_formula(tt))) < 1e-8
