import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sonicpatch import inversion as I
from sonicpatch import solver as S


@pytest.fixture(scope="module")
def xs(coarse):
    return I.x_field(coarse)


@pytest.fixture(scope="module")
def patch(coarse, xs):
    return I.physical_fields(coarse, xs)


def test_x_on_boundary_curve(ref, coarse, xs):
    for lv, x in zip(coarse.levels, xs):
        assert x[0] == pytest.approx(float(ref.hb.x_of_t(lv.t)), abs=1e-15)
    assert xs[0][0] == pytest.approx(float(ref.hb.x_of_t(ref.region.delta)))


def test_x_depends_only_on_stored_values(coarse, xs, tmp_path):
    coarse.to_csv(tmp_path / "f.csv")
    back = S.field_from_columns(S.read_csv(tmp_path / "f.csv"), coarse.region, coarse.cfg)
    again = I.x_field(back)
    assert all(np.array_equal(a, b) for a, b in zip(xs, again))


def test_jacobian_closed_form_consistent(coarse):
    for lv in coarse.levels[1::10]:
        xt, xp, rt, rp = I.closed_partials(coarse, lv)
        assert np.allclose(I.jacobian_closed(coarse, lv), xt * rp - xp * rt, rtol=1e-12)


def test_jacobian_vanishes_linearly(coarse):
    j = [float(np.median(I.jacobian_closed(coarse, lv))) for lv in coarse.levels[-5:]]
    t = [lv.t for lv in coarse.levels[-5:]]
    ratio = np.array(j) / np.array(t)
    assert np.all(np.abs(ratio / ratio[-1] - 1) < 0.05)


def test_x_psi_variants(coarse, xs):
    lv, x = coarse.levels[len(coarse.levels) // 2], xs[len(coarse.levels) // 2]
    with_L, with_W = I.x_psi_variants(coarse, lv)
    fd = np.gradient(x, lv.psi, edge_order=2)[3:-3]
    assert np.max(np.abs(fd - with_L[3:-3])) < 1e-4
    assert np.max(np.abs(fd - with_W[3:-3])) > 1e-2


def test_injectivity_reference(coarse, xs):
    rep = I.injectivity_check(coarse, xs)
    assert rep.passed and rep.collisions == 0 and rep.min_step > 0


def test_fold_detected(coarse, xs):
    # flipping the sign of W + Z reverses x along a level
    k = len(xs) // 2
    folded = list(xs)
    folded[k] = xs[k][::-1].copy()
    assert not I.injectivity_check(coarse, folded).monotone
    lv = coarse.levels[k]
    flipped = S.Level(lv.t, lv.psi, -lv.W, -lv.Z, lv.r, lv.theta, lv.L)
    assert np.all(I.jacobian_closed(coarse, flipped) < 0)


def test_duplicate_cells_detected(coarse, xs):
    dup = [x.copy() for x in xs]
    k = len(dup) - 1
    dup[k][2] = dup[k][1]
    lv = coarse.levels[k]
    lv.r[2], saved = lv.r[1], lv.r[2]
    try:
        assert I.injectivity_check(coarse, dup).collisions >= 1
    finally:
        lv.r[2] = saved


def test_physical_fields(ref, coarse, patch):
    bs = ref.branch.at(patch.t)
    assert np.allclose(np.hypot(patch.u, patch.v), bs.q, rtol=1e-13)
    assert np.all(np.hypot(patch.u, patch.v) > patch.a)
    assert np.allclose(patch.pi, np.sqrt(1 - patch.t**2))
    assert np.all(patch.j > 0)
    first = np.r_[0, np.cumsum([lv.n for lv in coarse.levels])[:-1]]
    xb = patch.x[first]
    assert np.allclose(patch.v[first] / patch.u[first], ref.spec.dphi(xb), rtol=1e-12)
    assert np.allclose(patch.r[first], ref.spec.phi(xb), rtol=1e-12)
    assert np.max(ref.branch.bernoulli_residual(patch.t)) < 1e-8


def test_sonic_curve(ref, patch):
    sc = patch.sonic
    assert (sc.x[0], sc.r[0]) == pytest.approx((ref.spec.x1, float(ref.spec.phi(ref.spec.x1))), abs=1e-12)
    assert I.segments_intersect(np.column_stack([sc.x, sc.r])) == 0
    assert np.allclose(np.linalg.norm(sc.tangent, axis=1), 1.0)
    assert sc.grad_norm_sq.min() > 0 and np.all(np.isfinite(sc.grad_norm_sq))


def test_df_curve(ref, patch):
    df = patch.df
    assert df.end_on_boundary
    assert df.t[0] == 0.0 and df.psi[0] == pytest.approx(ref.region.Dprime[1])
    assert df.psi[-1] == pytest.approx(float(ref.hb.psi_tilde(df.t[-1])), abs=1e-13)
    assert df.r[-1] == pytest.approx(float(ref.spec.phi(df.x[-1])), abs=1e-13)
    assert 0 < df.t[-1] < ref.region.delta
    assert np.all(np.diff(df.t) > 0)
    # the curve stays between the boundary image and the barrier
    assert np.all(df.psi <= ref.region.psi_bar(df.t) + 1e-12)
    assert np.all(df.psi >= ref.region.psi_tilde(df.t) - 1e-12)
    assert I.df_slope_error(patch.df) < 1e-2


def test_raster(patch, tmp_path):
    cols, (nx, nr, bounds) = I.raster(patch, 30, 20)
    assert cols["x"].size == 600 and (nx, nr) == (30, 20)
    inside = np.isfinite(cols["theta"])
    assert inside.any() and not inside.all()
    path = tmp_path / "raster.csv"
    I.write_raster(path, patch, 30, 20)
    assert path.read_text().startswith("# nx=30 nr=20 bounds=")
    back = S.read_csv(path)
    assert back["x"].size == 600


def test_segments_intersect_oracle():
    square = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0, 0.5]], float)
    assert I.segments_intersect(square) == 0
    bow = np.array([[0, 0], [1, 1], [1, 0], [0, 1]], float)
    assert I.segments_intersect(bow) == 1


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(-20, 20), st.integers(-20, 20)), min_size=4, max_size=12))
def test_segments_intersect_against_brute_force(pts):
    # integer vertices keep every orientation test exact in floating point
    P = np.array(pts, float)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    count = 0
    for i in range(len(P) - 1):
        for j in range(i + 2, len(P) - 1):
            p, p2, q, q2 = P[i], P[i + 1], P[j], P[j + 1]
            if cross(p, p2, q) * cross(p, p2, q2) < 0 and cross(q, q2, p) * cross(q, q2, p2) < 0:
                count += 1
    assert I.segments_intersect(P) == count
