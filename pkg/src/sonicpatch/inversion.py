"""Map the hodograph solution back to the physical (x, r) plane."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline, griddata

from .numerics import vectorized_bisect
from .solver import (DeterminacyViolation, HodographField, Level, SonicTrace,
                     _interpolator, char_rates, sonic_extrapolate, write_csv)


# ----------------------------------------------------------------------
# x by path integration along minus characteristics
# ----------------------------------------------------------------------

def _minus_feet(fld: HodographField, prev: Level, lv: Level, interp, iters=3):
    """Foot of the minus characteristic through each node of ``lv``.

    Returns the level reached (previous level or boundary crossing) and
    the foot psi, using the trapezoidal slope average.
    """
    hb, region = fld.hb, fld.region
    t_old, t_new = prev.t, lv.t
    dt = t_old - t_new
    lam_node = char_rates(fld.branch, np.full(lv.n, t_new), lv.W, lv.Z, lv.r, lv.theta).lambda_minus
    lo = float(region.psi_tilde(t_old))
    lam_bar = lam_node.copy()
    for _ in range(iters):
        pf = np.maximum(lv.psi + lam_bar * dt, min(lo, prev.psi[0]))
        U = interp(np.clip(pf, prev.psi[0], prev.psi[-1]))
        lam_f = char_rates(fld.branch, np.full(lv.n, t_old), U[0], U[1], U[2], U[3]).lambda_minus
        lam_bar = 0.5 * (lam_node + lam_f)
    pf = lv.psi + lam_bar * dt
    cross = pf <= lo
    cross[0] = True
    s = np.full(lv.n, t_old)
    if cross.any():
        lam_c = lam_node[cross]
        psi_c = lv.psi[cross]
        for _ in range(iters):
            sc = vectorized_bisect(lambda u: hb.psi_tilde(u) - psi_c - lam_c * (u - t_new),
                                   np.full(psi_c.size, t_new), np.full(psi_c.size, t_old))
            W, Z, r, th, _, _ = hb.data_at(sc)
            lam_b = char_rates(fld.branch, sc, W, Z, r, th).lambda_minus
            lam_c = 0.5 * (lam_node[cross] + lam_b)
        sc[0 if cross[0] else slice(0, 0)] = t_new
        s[cross] = sc
        pf[cross] = hb.psi_tilde(sc)
    return s, pf, cross


def x_field(fld: HodographField) -> list[np.ndarray]:
    """x at every node, integrated along minus characteristics.

    Each node inherits x from the foot of its minus characteristic
    (boundary value x_hat at a crossing, interpolated value otherwise)
    plus the trapezoidal integral of dx/dt along the step. Uses only the
    stored field values, so it can be re-run from exported columns.
    """
    hb, order = fld.hb, fld.cfg.interp_order
    xs = [hb.x_of_t(np.full(fld.levels[0].n, fld.levels[0].t))]
    for k in range(1, len(fld.levels)):
        prev, lv = fld.levels[k - 1], fld.levels[k]
        V = np.vstack([prev.W, prev.Z, prev.r, prev.theta, xs[-1]])
        interp = _interpolator(prev.psi, V, order)
        s, pf, cross = _minus_feet(fld, prev, lv, interp)
        U = np.empty((5, lv.n))
        inner = ~cross
        if inner.any():
            U[:, inner] = interp(pf[inner])
        if cross.any():
            W, Z, r, th, _, xb = hb.data_at(s[cross])
            U[:, cross] = np.vstack([W, Z, r, th, xb])
        g_foot = char_rates(fld.branch, s, U[0], U[1], U[2], U[3]).rhs_x
        g_node = char_rates(fld.branch, np.full(lv.n, lv.t), lv.W, lv.Z, lv.r, lv.theta).rhs_x
        x = U[4] - 0.5 * (s - lv.t) * (g_foot + g_node)
        x[0] = hb.x_of_t(lv.t)
        xs.append(x)
    return xs


# ----------------------------------------------------------------------
# Closed forms and finite differences in the hodograph plane
# ----------------------------------------------------------------------

def jacobian_closed(fld: HodographField, lv: Level):
    bs = fld.branch.at(np.full(lv.n, lv.t))
    return lv.t * bs.pi**2 * lv.r * bs.gamma / (bs.a * bs.gamma_a * bs.F * (lv.W + lv.Z))


def closed_partials(fld: HodographField, lv: Level):
    """Closed-form (x_t, x_psi, r_t, r_psi) at the nodes of a level.

    ``x_psi`` is the variant whose last term carries L, consistent with
    the x_t and r partials; :func:`x_psi_variants` reports both.
    """
    bs = fld.branch.at(np.full(lv.n, lv.t))
    t, pi, F, q = lv.t, bs.pi, bs.F, bs.q
    S = lv.W + lv.Z
    sn, cs = np.sin(lv.theta), np.cos(lv.theta)
    x_t = t * pi * lv.r * sn / (F * S)
    r_t = -t * pi * lv.r * cs / (F * S)
    x_psi = (cs * S + 2 * pi * sn * lv.L) / (q * S)
    r_psi = (sn * S - 2 * pi * cs * lv.L) / (q * S)
    return x_t, x_psi, r_t, r_psi


def x_psi_variants(fld: HodographField, lv: Level):
    """x_psi with the last term carrying L (consistent) or W (as printed)."""
    bs = fld.branch.at(np.full(lv.n, lv.t))
    S = lv.W + lv.Z
    sn, cs = np.sin(lv.theta), np.cos(lv.theta)
    with_L = (cs * S + 2 * bs.pi * sn * lv.L) / (bs.q * S)
    with_W = (cs * S + 2 * bs.pi * sn * lv.W) / (bs.q * S)
    return with_L, with_W


@dataclass
class NodeDerivs:
    """Finite-difference partials at interior nodes of interior levels."""

    level: np.ndarray  # level index per sample
    node: np.ndarray  # node index within the level
    t: np.ndarray
    psi: np.ndarray
    d_t: dict
    d_psi: dict
    values: dict


def hodograph_fd(fld: HodographField, fields: list[dict], edge=2) -> NodeDerivs:
    """Central differences in t (across levels) and psi (within a level).

    ``fields[k]`` maps names to arrays on level ``k``. Nodes whose psi lies
    outside the neighbouring levels, or within ``edge`` nodes of a level
    end, are skipped.
    """
    lvs = fld.levels
    names = list(fields[0])
    out_l, out_n, out_t, out_p = [], [], [], []
    d_t = {k: [] for k in names}
    d_p = {k: [] for k in names}
    vals = {k: [] for k in names}
    for k in range(1, len(lvs) - 1):
        up, lv, dn = lvs[k - 1], lvs[k], lvs[k + 1]
        if lv.n < 2 * edge + 3 or up.n < 4 or dn.n < 4:
            continue
        idx = np.arange(edge, lv.n - edge)
        psi = lv.psi[idx]
        ok = (psi >= up.psi[0]) & (psi <= up.psi[-1]) & (psi >= dn.psi[0]) & (psi <= dn.psi[-1])
        idx, psi = idx[ok], psi[ok]
        if idx.size == 0:
            continue
        dt_up, dt_dn = up.t - lv.t, lv.t - dn.t
        for name in names:
            f = fields[k][name]
            fu = CubicSpline(up.psi, fields[k - 1][name])(psi)
            fd = CubicSpline(dn.psi, fields[k + 1][name])(psi)
            f0 = f[idx]
            # three-point derivative on a possibly uneven stencil
            d_t[name].append((fu * dt_dn**2 - fd * dt_up**2 + f0 * (dt_up**2 - dt_dn**2))
                             / (dt_up * dt_dn * (dt_up + dt_dn)))
            d_p[name].append(np.gradient(f, lv.psi, edge_order=2)[idx])
            vals[name].append(f0)
        out_l.append(np.full(idx.size, k))
        out_n.append(idx)
        out_t.append(np.full(idx.size, lv.t))
        out_p.append(psi)
    cat = np.concatenate
    return NodeDerivs(cat(out_l), cat(out_n), cat(out_t), cat(out_p),
                      {k: cat(v) for k, v in d_t.items()}, {k: cat(v) for k, v in d_p.items()},
                      {k: cat(v) for k, v in vals.items()})


@dataclass
class PhysicalDerivs:
    level: np.ndarray
    node: np.ndarray
    t: np.ndarray
    psi: np.ndarray
    x: np.ndarray
    r: np.ndarray
    j_fd: np.ndarray
    d_x: dict
    d_r: dict
    values: dict


def physical_fd(fld: HodographField, xs, extra=None, edge=2) -> PhysicalDerivs:
    """Physical-plane partials of theta, pi, u, v via the discrete Jacobian."""
    fields = []
    for k, lv in enumerate(fld.levels):
        bs = fld.branch.at(np.full(lv.n, lv.t))
        d = dict(x=xs[k], r=lv.r, theta=lv.theta, pi=bs.pi,
                 u=bs.q * np.cos(lv.theta), v=bs.q * np.sin(lv.theta))
        if extra is not None:
            d.update(extra(k, lv))
        fields.append(d)
    nd = hodograph_fd(fld, fields, edge)
    xt, xp = nd.d_t["x"], nd.d_psi["x"]
    rt, rp = nd.d_t["r"], nd.d_psi["r"]
    j = xt * rp - xp * rt
    t_x, t_r = rp / j, -xp / j
    p_x, p_r = -rt / j, xt / j
    d_x, d_r = {}, {}
    for name in nd.d_t:
        d_x[name] = nd.d_t[name] * t_x + nd.d_psi[name] * p_x
        d_r[name] = nd.d_t[name] * t_r + nd.d_psi[name] * p_r
    return PhysicalDerivs(nd.level, nd.node, nd.t, nd.psi, nd.values["x"], nd.values["r"], j, d_x, d_r, nd.values)


def gradients_closed(branch, t, W, Z, r, theta, L):
    """(theta_x, theta_r, pi_x, pi_r) from the hodograph unknowns, in closed form."""
    bs = branch.at(np.asarray(t, dtype=float))
    pi = bs.pi
    S = W + Z
    D = W - Z
    sn, cs = np.sin(theta), np.cos(theta)
    c = bs.F / pi**2
    th_x = (t * sn * D - pi * cs * S + sn * sn) / r
    th_r = (-t * cs * D - pi * sn * S - sn * cs) / r
    pi_x = -c / r * (S * sn - 2 * pi * cs * L)
    pi_r = c / r * (S * cs + 2 * pi * sn * L)
    return th_x, th_r, pi_x, pi_r


def closed_physical_gradients(fld: HodographField, lv: Level):
    return gradients_closed(fld.branch, np.full(lv.n, lv.t), lv.W, lv.Z, lv.r, lv.theta, lv.L)


# ----------------------------------------------------------------------
# Checks on the map
# ----------------------------------------------------------------------

@dataclass
class InjectivityReport:
    monotone: bool
    worst_level: int
    min_step: float
    collisions: int
    resolution: float

    @property
    def passed(self):
        return self.monotone and self.collisions == 0


def injectivity_check(fld: HodographField, xs, resolution=1e-6) -> InjectivityReport:
    """Strict monotonicity of x along each level plus a spatial-hash collision count."""
    worst, worst_k = np.inf, -1
    for k, (lv, x) in enumerate(zip(fld.levels, xs)):
        if lv.n < 2:
            continue
        step = float(np.min(np.diff(x)))
        if step < worst:
            worst, worst_k = step, k
    X = np.concatenate(xs)
    R = np.concatenate([lv.r for lv in fld.levels])
    keys = np.stack([np.floor(X / resolution), np.floor(R / resolution)], axis=1).astype(np.int64)
    uniq = np.unique(keys, axis=0)
    return InjectivityReport(bool(worst > 0), worst_k, float(worst), int(keys.shape[0] - uniq.shape[0]),
                             resolution)


def segments_intersect(P):
    """Count proper intersections between non-adjacent segments of polyline P."""
    a, b = P[:-1], P[1:]
    n = a.shape[0]
    i, j = np.triu_indices(n, k=2)
    p, p2, q, q2 = a[i], b[i], a[j], b[j]

    def orient(u, v, w):
        return np.sign((v[:, 0] - u[:, 0]) * (w[:, 1] - u[:, 1]) - (v[:, 1] - u[:, 1]) * (w[:, 0] - u[:, 0]))

    hits = (orient(p, p2, q) * orient(p, p2, q2) < 0) & (orient(q, q2, p) * orient(q, q2, p2) < 0)
    return int(hits.sum())


# ----------------------------------------------------------------------
# Physical fields, sonic curve, closing characteristic
# ----------------------------------------------------------------------

@dataclass
class SonicCurve:
    psi: np.ndarray
    x: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    tangent: np.ndarray
    grad_norm_sq: np.ndarray  # at the deepest level, as a proxy
    trace: SonicTrace


@dataclass
class DFCurve:
    t: np.ndarray
    psi: np.ndarray
    x: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    end_on_boundary: bool


@dataclass
class PatchSolution:
    t: np.ndarray
    psi: np.ndarray
    x: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    pi: np.ndarray
    u: np.ndarray
    v: np.ndarray
    a: np.ndarray
    j: np.ndarray
    x_levels: list
    sonic: SonicCurve
    df: DFCurve

    def columns(self):
        return {k: getattr(self, k) for k in ("t", "psi", "x", "r", "theta", "pi", "u", "v", "a", "j")}


def sonic_curve(fld: HodographField, xs) -> SonicCurve:
    tr = sonic_extrapolate(fld, xs)
    P = np.column_stack([tr.x, tr.r])
    tan = np.gradient(P, axis=0)
    tan /= np.linalg.norm(tan, axis=1, keepdims=True)
    lv = fld.levels[-1]
    bs = fld.branch.at(np.full(lv.n, lv.t))
    c = bs.F / bs.pi**2
    g2 = (c / lv.r) ** 2 * ((lv.W + lv.Z) ** 2 + 4 * bs.pi**2 * lv.L**2)
    return SonicCurve(tr.psi, tr.x, tr.r, tr.theta, tan, g2, tr)


def _level_sample(lv: Level, x, psi):
    names = ("r", "theta", "Z")
    if lv.n > 3:
        vals = [CubicSpline(lv.psi, getattr(lv, k))(psi) for k in names]
        xv = CubicSpline(lv.psi, x)(psi)
    else:
        vals = [np.interp(psi, lv.psi, getattr(lv, k)) for k in names]
        xv = np.interp(psi, lv.psi, x)
    return xv, *vals


def df_characteristic(fld: HodographField, xs, sonic: SonicCurve) -> DFCurve:
    """Plus characteristic in the hodograph plane from D' = (0, psi_bar(0)).

    It is followed upward in t through the marched levels until it meets
    the boundary curve at F' = (delta_bar, psi_tilde(delta_bar)).
    """
    hb, region, branch = fld.hb, fld.region, fld.branch
    trace = sonic.trace
    psi0 = float(region.psi_bar(0.0))
    ts, ps = [0.0], [psi0]
    xv = [float(np.interp(psi0, trace.psi, sonic.x))]
    rv = [float(np.interp(psi0, trace.psi, sonic.r))]
    thv = [float(np.interp(psi0, trace.psi, sonic.theta))]

    def lam(k, psi):
        lv = fld.levels[k]
        _, r, _, Z = _level_sample(lv, xs[k], psi)
        bs = branch.at(lv.t)
        return float(r * bs.q * lv.t**2 / (2 * bs.F * Z))

    lam_a, t_a, psi_a = 0.0, 0.0, psi0
    hit = False
    for k in range(len(fld.levels) - 1, -1, -1):
        t_b = fld.levels[k].t
        h = t_b - t_a
        pred = psi_a + h * lam_a
        lam_b = lam(k, min(pred, float(region.psi_bar(t_b))))
        psi_b = psi_a + 0.5 * h * (lam_a + lam_b)
        lo, hi = float(region.psi_tilde(t_b)), float(region.psi_bar(t_b))
        if psi_b > hi + 1e-12:
            raise DeterminacyViolation(f"closing characteristic leaves through the barrier at t={t_b:.6g}")
        if psi_b <= lo:
            # meets the boundary curve between t_a and t_b
            g_a = float(region.psi_tilde(t_a)) - psi_a
            g_b = lo - psi_b
            s = t_a + h * (-g_a) / (g_b - g_a)
            for _ in range(30):
                gs = float(hb.psi_tilde(s)) - (psi_a + (s - t_a) * (lam_a + lam_b) * 0.5)
                slope = float(hb.dpsi_tilde(s)) - 0.5 * (lam_a + lam_b)
                s -= gs / slope
            W, Z, r, th, _, xb = hb.data_at(np.array([s]))
            ts.append(s)
            ps.append(float(hb.psi_tilde(s)))
            xv.append(float(xb[0]))
            rv.append(float(r[0]))
            thv.append(float(th[0]))
            hit = True
            break
        x_b, r_b, th_b, _ = _level_sample(fld.levels[k], xs[k], psi_b)
        ts.append(t_b)
        ps.append(psi_b)
        xv.append(float(x_b))
        rv.append(float(r_b))
        thv.append(float(th_b))
        t_a, psi_a, lam_a = t_b, psi_b, lam(k, psi_b)
    return DFCurve(np.array(ts), np.array(ps), np.array(xv), np.array(rv), np.array(thv), hit)


def df_slope_errors(df: DFCurve):
    """|chord slope - expected slope| on each segment of the curve.

    Along the curve dx and dr carry a factor t, so the expected chord
    direction is the t-weighted mean of (cos beta, sin beta) with
    beta = theta - omega linear on the segment (two-point Gauss rule).
    """
    beta = df.theta - np.arccos(np.clip(df.t, 0, 1))
    ta, tb = df.t[:-1], df.t[1:]
    ba, bb = beta[:-1], beta[1:]
    cx = np.zeros_like(ta)
    cr = np.zeros_like(ta)
    for g in (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)):
        tg = ta + g * (tb - ta)
        bg = ba + g * (bb - ba)
        cx += tg * np.cos(bg)
        cr += tg * np.sin(bg)
    slope = np.diff(df.r) / np.diff(df.x)
    return np.abs(slope - cr / cx)


def df_slope_error(df: DFCurve, include_ends=False):
    """Worst slope error over full level-to-level segments.

    The first segment joins the extrapolated sonic point to the deepest
    level, so its error is fixed by t_min rather than the grid. The last
    one ends at a boundary crossing and can be arbitrarily short, which
    turns an O(h^2) endpoint offset into an O(h) chord slope. Both are
    left out unless asked for; the endpoints are checked separately.
    """
    e = df_slope_errors(df)
    if not include_ends and df.end_on_boundary:
        e = e[1:-1]
    elif not include_ends:
        e = e[1:]
    return float(e.max())


def physical_fields(fld: HodographField, xs=None) -> PatchSolution:
    if xs is None:
        xs = x_field(fld)
    cols = {k: [] for k in ("t", "psi", "x", "r", "theta", "pi", "u", "v", "a", "j")}
    for lv, x in zip(fld.levels, xs):
        bs = fld.branch.at(np.full(lv.n, lv.t))
        cols["t"].append(np.full(lv.n, lv.t))
        cols["psi"].append(lv.psi)
        cols["x"].append(x)
        cols["r"].append(lv.r)
        cols["theta"].append(lv.theta)
        cols["pi"].append(bs.pi)
        cols["u"].append(bs.a * bs.gamma_a * np.cos(lv.theta) / (bs.gamma * bs.pi))
        cols["v"].append(bs.a * bs.gamma_a * np.sin(lv.theta) / (bs.gamma * bs.pi))
        cols["a"].append(bs.a)
        cols["j"].append(jacobian_closed(fld, lv))
    sc = sonic_curve(fld, xs)
    df = df_characteristic(fld, xs, sc)
    cat = {k: np.concatenate(v) for k, v in cols.items()}
    return PatchSolution(**cat, x_levels=xs, sonic=sc, df=df)


def raster(sol: PatchSolution, nx=200, nr=200, names=("theta", "pi", "u", "v", "a")):
    """Linear scattered-data resampling onto a regular (x, r) grid (NaN outside)."""
    xg = np.linspace(sol.x.min(), sol.x.max(), nx)
    rg = np.linspace(sol.r.min(), sol.r.max(), nr)
    X, R = np.meshgrid(xg, rg, indexing="ij")
    pts = np.column_stack([sol.x, sol.r])
    out = {"x": X.ravel(), "r": R.ravel()}
    for k in names:
        out[k] = griddata(pts, getattr(sol, k), (X, R), method="linear").ravel()
    bounds = (float(xg[0]), float(xg[-1]), float(rg[0]), float(rg[-1]))
    return out, (nx, nr, bounds)


def write_raster(path, sol: PatchSolution, nx=200, nr=200):
    cols, (nx, nr, b) = raster(sol, nx, nr)
    write_csv(path, cols, comment=f"nx={nx} nr={nr} bounds={b[0]!r},{b[1]!r},{b[2]!r},{b[3]!r}")
