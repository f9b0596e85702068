import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from sonicpatch import domain as D
from sonicpatch import solver as S
from sonicpatch.eos import BranchState


def fake_state(t, F, K, q):
    pi = np.sqrt(1 - t * t)
    nan = float("nan")
    return BranchState(t, nan, nan, nan, q, nan, pi, nan, nan, nan, nan, K, F)


# ----------------------------------------------------------------------
# Kinematics along characteristics against the inversion partials
# ----------------------------------------------------------------------

t, W, Z, r, th, F, q = sp.symbols("t W Z r theta F q", positive=True)
pi = sp.sqrt(1 - t**2)
L = (W - Z) / (2 * t)
S_ = W + Z
# partials of the map (t, psi) -> (x, r) and of theta in the physical plane
x_t = t * pi * r * sp.sin(th) / (F * S_)
r_t = -t * pi * r * sp.cos(th) / (F * S_)
x_psi = (sp.cos(th) * S_ + 2 * pi * sp.sin(th) * L) / (q * S_)
r_psi = (sp.sin(th) * S_ - 2 * pi * sp.cos(th) * L) / (q * S_)
th_x = (t * sp.sin(th) * (W - Z) - pi * sp.cos(th) * S_ + sp.sin(th) ** 2) / r
th_r = (-t * sp.cos(th) * (W - Z) - pi * sp.sin(th) * S_ - sp.sin(th) * sp.cos(th)) / r
th_t = th_x * x_t + th_r * r_t
th_psi = th_x * x_psi + th_r * r_psi
lam_m = -r * t**2 * q / (2 * F * W)
lam_p = r * t**2 * q / (2 * F * Z)
ALONG = {
    "rhs_x": x_t + x_psi * lam_m, "rhs_r": r_t + r_psi * lam_m, "rhs_theta": th_t + th_psi * lam_m,
    "rhs_x_plus": x_t + x_psi * lam_p, "rhs_r_plus": r_t + r_psi * lam_p,
    "rhs_theta_plus": th_t + th_psi * lam_p,
}
ARGS = (t, W, Z, r, th, F, q)


@pytest.mark.parametrize("name", sorted(ALONG))
def test_characteristic_kinematics_symbolic(name):
    f = sp.lambdify(ARGS, ALONG[name], "numpy")
    for vals in [(0.1, 0.2, 0.2, 1.0, 0.4, 2.3, 0.5), (0.1, 0.25, 0.18, 1.1, 0.4, 2.1, 0.52),
                 (0.37, 0.9, 0.3, 1.7, 1.1, 1.4, 0.61)]:
        tt, WW, ZZ, rr, thh, FF, qq = vals
        got = getattr(S.rates_at(fake_state(tt, FF, 1.3, qq), WW, ZZ, rr, thh), name)
        assert float(got) == pytest.approx(float(f(*vals)), rel=1e-12, abs=1e-15)


def test_minus_x_rate_simplifies_symbolically():
    alpha_cos = t * sp.cos(th) - pi * sp.sin(th)
    assert sp.simplify(ALONG["rhs_x"] - (-t * r * alpha_cos / (2 * F * W))) == 0


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 0.6), st.floats(0.02, 2.0), st.floats(0.02, 2.0), st.floats(0.3, 3.0),
       st.floats(0.0, 1.4), st.floats(0.3, 3.0), st.floats(0.1, 0.7))
def test_reciprocal_form_is_the_primal_form(tt, WW, ZZ, rr, thh, KK, qq):
    # the two forms coincide once F and K are tied as on the branch
    FF = (1 - tt * tt) * (KK + 1 - tt * tt)
    cr = S.rates_at(fake_state(tt, FF, KK, qq), WW, ZZ, rr, thh)
    assert cr.rhs_Wbar == pytest.approx(-cr.rhs_W / WW**2, rel=1e-9, abs=1e-9)
    assert cr.rhs_Zbar == pytest.approx(-cr.rhs_Z / ZZ**2, rel=1e-9, abs=1e-9)


def test_symmetric_state_rates():
    # W = Z: L vanishes and the slopes are mirror images
    cr = S.rates_at(fake_state(0.1, 2.3, 1.3, 0.5), 0.2, 0.2, 1.0, 0.4)
    assert cr.lambda_plus == pytest.approx(-cr.lambda_minus)
    assert cr.alpha - cr.beta == pytest.approx(2 * np.arcsin(np.sqrt(1 - 0.01)))


def test_nonpositive_rejected():
    with pytest.raises(S.InvariantEscape):
        S.rates_at(fake_state(0.1, 2.3, 1.3, 0.5), -0.1, 0.2, 1.0, 0.4)


# ----------------------------------------------------------------------
# Configuration
# ----------------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(n_levels=1), dict(interp_order=4), dict(form="dual"), dict(t_min=-1.0)])
def test_config_rejected(kw):
    with pytest.raises(ValueError):
        S.SolverConfig(**kw)


def test_t_min_range(ref):
    with pytest.raises(ValueError):
        S.march(ref.region, S.SolverConfig(n_levels=10, t_min=0.5))


def test_step_ratio_guard(ref):
    with pytest.raises(ValueError, match="cfl_like"):
        S.march(ref.region, S.SolverConfig(n_levels=10, n_psi=4000, cfl_like=0.01))


# ----------------------------------------------------------------------
# Marched field
# ----------------------------------------------------------------------

def test_field_structure(ref, coarse):
    reg = ref.region
    lv0 = coarse.levels[0]
    assert lv0.n == 1 and lv0.t == reg.delta and lv0.psi[0] == pytest.approx(reg.Tprime[1])
    assert coarse.t_min == pytest.approx(0.01 * reg.delta)
    for lv in coarse.levels:
        assert lv.psi[0] == pytest.approx(float(reg.psi_tilde(lv.t)), abs=1e-15)
        assert lv.psi[-1] <= float(reg.psi_bar(lv.t)) + 1e-15
        assert np.all(np.diff(lv.psi) > 0)
        assert np.all(lv.W > 0) and np.all(lv.Z > 0)
        Wb, Zb, rb, thb, _, _ = ref.hb.data_at(np.array([lv.t]))
        assert (lv.W[0], lv.Z[0], lv.r[0], lv.theta[0]) == pytest.approx((Wb[0], Zb[0], rb[0], thb[0]))


def test_L_is_the_scaled_difference(coarse):
    for lv in coarse.levels[1:]:
        assert np.allclose(lv.L, (lv.W - lv.Z) / (2 * lv.t), rtol=0, atol=1e-12)


def test_feet_recorded(coarse):
    for prev, lv in zip(coarse.levels, coarse.levels[1:]):
        assert np.all(lv.s_minus >= lv.t) and np.all(lv.s_minus <= prev.t + 1e-15)
        assert np.all(lv.psi_plus <= float(coarse.region.psi_bar(prev.t)) + 1e-12)


def test_csv_roundtrip_is_exact(tmp_path, coarse):
    path = tmp_path / "field.csv"
    coarse.to_csv(path)
    back = S.field_from_columns(S.read_csv(path), coarse.region, coarse.cfg)
    a, b = coarse.columns(), back.columns()
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_determinacy_violation_names_characteristic(ref):
    reg = D.effective_region(ref.hb, 0.3, Ktilde_user=0.3)
    with pytest.raises(S.DeterminacyViolation, match=r"plus characteristic from \(t="):
        S.march(reg, S.SolverConfig(n_levels=40))


@pytest.mark.parametrize("order", [1, 3])
def test_other_interpolants_agree(coarse, ref, order):
    other = S.march(ref.region, S.SolverConfig(n_levels=60, interp_order=order))
    lv, lo = coarse.levels[-1], other.levels[-1]
    tol = 1e-4 if order == 1 else 1e-6
    assert np.max(np.abs(lv.W - lo.W)) < tol


def test_reciprocal_agrees(march_cache):
    a, b = march_cache(60), march_cache(60, "reciprocal")
    assert np.max(np.abs(a.levels[-1].W - b.levels[-1].W)) < 1e-6


def test_guarded_L_stays_close(ref, coarse):
    g = S.march(ref.region, S.SolverConfig(n_levels=60, t_guard=10 * coarse.t_min))
    assert np.max(np.abs(g.levels[-1].W - coarse.levels[-1].W)) < 1e-5


def test_sonic_extrapolation(ref, coarse):
    tr = S.sonic_extrapolate(coarse)
    assert tr.psi[0] == 0.0 and tr.psi[-1] == pytest.approx(float(ref.region.psi_bar(0.0)))
    assert tr.gap_extrapolated < tr.gap_bottom
    assert tr.gap_bottom <= tr.bound_bottom * (1 + 1e-12)
    assert np.allclose(tr.merged, 0.5 * (tr.W + tr.Z))
    b = ref.hb.data_at(np.array([0.0]))
    assert tr.W[0] == b[0][0] and tr.r[0] == b[2][0]
