"""Quantitative checks on a computed patch, single-grid and under refinement.

Every check takes marched fields (which :func:`solver.field_from_columns`
rebuilds from exported CSV) and returns :class:`CheckReport` entries;
failures are entries, never exceptions.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from . import inversion as inv
from .domain import DomainParams, check_strong_determinacy
from .numerics import observed_order
from .solver import HodographField

MIN_ORDER = 1.5
STRUCTURAL_TOL = 1e-8


@dataclass
class CheckReport:
    name: str
    passed: bool
    margin: float
    location: dict | None = None
    refinement_trend: list | None = None
    status: str = ""
    detail: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)
        self.margin = float(self.margin)
        if not self.status:
            self.status = "pass" if self.passed else "fail"

    def to_dict(self):
        d = asdict(self)
        d["margin"] = _jsonable(self.margin)
        if self.refinement_trend is not None:
            d["refinement_trend"] = [_jsonable(v) for v in self.refinement_trend]
        return d


def _jsonable(v):
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    v = float(v)
    return v if np.isfinite(v) else str(v)


def skipped(name, why="needs at least three grids"):
    return CheckReport(name, True, float("nan"), status="skipped", detail=why)


# ----------------------------------------------------------------------
# Hoelder quotients
# ----------------------------------------------------------------------

def holder_quotient(positions, values, exponent, max_pairs=10**6, seed=0):
    """sup |f(p) - f(q)| / |p - q|^exponent over sample pairs.

    All pairs are used when there are at most ``max_pairs`` of them,
    otherwise ``max_pairs`` distinct-index pairs drawn with a seeded RNG.
    """
    if not 0 < exponent <= 1:
        raise ValueError("exponent must lie in (0, 1]")
    P = np.asarray(positions, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    f = np.asarray(values, dtype=float)
    n = f.size
    if n < 2:
        raise ValueError("need at least two samples")
    if n * (n - 1) // 2 <= max_pairs:
        i, j = np.triu_indices(n, k=1)
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, n, max_pairs)
        j = rng.integers(0, n - 1, max_pairs)
        j = j + (j >= i)
    dist = np.linalg.norm(P[i] - P[j], axis=1)
    ok = dist > 0
    return float(np.max(np.abs(f[i] - f[j])[ok] / dist[ok] ** exponent))


# ----------------------------------------------------------------------
# Per-grid products
# ----------------------------------------------------------------------

@dataclass
class GridRun:
    """One marched field with its physical-plane reconstruction."""

    fld: HodographField
    xs: list
    sol: inv.PatchSolution
    pd: inv.PhysicalDerivs = field(repr=False)

    @property
    def n_levels(self):
        return len(self.fld.levels) - 1


def grid_run(fld: HodographField) -> GridRun:
    xs = inv.x_field(fld)
    return GridRun(fld, xs, inv.physical_fields(fld, xs), inv.physical_fd(fld, xs))


def _locate(fld, k_level, k_node):
    lv = fld.levels[int(k_level)]
    return {"t": float(lv.t), "psi": float(lv.psi[int(k_node)])}


def _flat_argmin(fld, per_level):
    """Location of the smallest entry across a per-level list of arrays."""
    best, where = np.inf, (0, 0)
    for k, arr in enumerate(per_level):
        if arr.size == 0:
            continue
        j = int(np.argmin(arr))
        if arr[j] < best:
            best, where = float(arr[j]), (k, j)
    return best, _locate(fld, *where)


# ----------------------------------------------------------------------
# Residuals and closed-form comparisons at FD sample nodes
# ----------------------------------------------------------------------

def angle_system_residual(run: GridRun):
    """Worst residual of the plus/minus angle-variable equations."""
    pd, branch = run.pd, run.fld.branch
    t, th, pi, r = pd.t, pd.values["theta"], pd.values["pi"], pd.r
    bs = branch.at(t)
    om = np.arccos(t)
    c = 4 * bs.a**2 * t / bs.F1

    def along(ang, f):
        return r * (np.cos(ang) * pd.d_x[f] + np.sin(ang) * pd.d_r[f])

    Rp = along(th + om, "theta") + c * along(th + om, "pi") + pi * np.sin(th)
    Rm = along(th - om, "theta") - c * along(th - om, "pi") - pi * np.sin(th)
    R = np.maximum(np.abs(Rp), np.abs(Rm))
    k = int(np.argmax(R))
    return float(R[k]), {"t": float(t[k]), "psi": float(pd.psi[k])}


def full_system_residual(run: GridRun):
    """Worst residuals of the potential-flow equation and of irrotationality."""
    pd, branch = run.pd, run.fld.branch
    bs = branch.at(pd.t)
    u, v, r = pd.values["u"], pd.values["v"], pd.r
    scale = bs.gamma / (bs.a * bs.gamma_a)
    M1, M2 = scale * u, scale * v
    E1 = ((M1**2 - 1) * pd.d_x["u"] + M1 * M2 * (pd.d_r["u"] + pd.d_x["v"])
          + (M2**2 - 1) * pd.d_r["v"] - v / r)
    E2 = pd.d_r["u"] - pd.d_x["v"]
    k1, k2 = int(np.argmax(np.abs(E1))), int(np.argmax(np.abs(E2)))
    loc = {"t": float(pd.t[k1]), "psi": float(pd.psi[k1])}
    return float(abs(E1[k1])), float(abs(E2[k2])), loc


def _closed_at(run: GridRun, fn):
    """Evaluate a per-level closed form at the FD sample nodes."""
    per_level = {}
    out = []
    for k, j in zip(run.pd.level, run.pd.node):
        if k not in per_level:
            per_level[k] = fn(run.fld, run.fld.levels[k])
        out.append([c[j] for c in per_level[k]])
    return np.array(out).T


def gradient_identity_error(run: GridRun):
    """FD physical gradients of theta and pi against their closed forms."""
    closed = _closed_at(run, inv.closed_physical_gradients)
    pd = run.pd
    fd = [pd.d_x["theta"], pd.d_r["theta"], pd.d_x["pi"], pd.d_r["pi"]]
    return max(float(np.max(np.abs(a - b))) for a, b in zip(fd, closed))


def x_partials_error(run: GridRun):
    """FD x_t and x_psi against the closed forms; x_psi in both printed variants."""
    nd = inv.hodograph_fd(run.fld, [{"x": x} for x in run.xs])
    parts = {}
    rows = {}
    for k, j in zip(nd.level, nd.node):
        if k not in rows:
            lv = run.fld.levels[k]
            xt, _, _, _ = inv.closed_partials(run.fld, lv)
            wl, ww = inv.x_psi_variants(run.fld, lv)
            rows[k] = (xt, wl, ww)
        for name, arr in zip(("x_t", "x_psi_L", "x_psi_W"), rows[k]):
            parts.setdefault(name, []).append(arr[j])
    e_t = float(np.max(np.abs(nd.d_t["x"] - np.array(parts["x_t"]))))
    e_L = float(np.max(np.abs(nd.d_psi["x"] - np.array(parts["x_psi_L"]))))
    e_W = float(np.max(np.abs(nd.d_psi["x"] - np.array(parts["x_psi_W"]))))
    return e_t, e_L, e_W


def jacobian_gap(run: GridRun):
    closed = _closed_at(run, lambda f, lv: (inv.jacobian_closed(f, lv),))[0]
    rel = np.abs(run.pd.j_fd - closed) / np.abs(closed)
    k = int(np.argmax(rel))
    return float(rel[k]), {"t": float(run.pd.t[k]), "psi": float(run.pd.psi[k])}


def degeneracy_slope(fld: HodographField, decades=1.0):
    """log-log slope of max_psi |W - Z| against t over the bottom levels."""
    t = fld.t_levels
    keep = (t <= fld.t_min * 10**decades) & (np.array([lv.n for lv in fld.levels]) > 0)
    gaps = np.array([np.max(np.abs(lv.W - lv.Z)) for lv in fld.levels])
    return float(np.polyfit(np.log(t[keep]), np.log(gaps[keep]), 1)[0])


def sup_L(fld: HodographField):
    return max(float(np.max(np.abs(lv.L))) for lv in fld.levels)


def holder_hodograph(fld: HodographField, seed=0):
    lv = fld.levels[-1]
    return {k: holder_quotient(lv.psi, getattr(lv, k), 1.0 / 3.0, seed=seed) for k in ("W", "Z", "L")}


def holder_physical(run: GridRun, seed=0):
    X = np.concatenate(run.xs)
    R = np.concatenate([lv.r for lv in run.fld.levels])
    pos = np.column_stack([X, R])
    grads = [inv.closed_physical_gradients(run.fld, lv) for lv in run.fld.levels]
    names = ("theta_x", "theta_r", "pi_x", "pi_r")
    return {name: holder_quotient(pos, np.concatenate([g[i] for g in grads]), 1.0 / 6.0, seed=seed)
            for i, name in enumerate(names)}


def self_convergence(fields: list[HodographField], names=("W", "Z", "r", "theta")):
    """Successive max differences at t_min on the coarsest grid's nodes, and orders."""
    base = fields[0].levels[-1].psi
    vals = {k: [CubicSpline(f.levels[-1].psi, getattr(f.levels[-1], k))(base) for f in fields]
            for k in names}
    out = {}
    for k, v in vals.items():
        diffs = [float(np.max(np.abs(v[i] - v[i + 1]))) for i in range(len(v) - 1)]
        out[k] = (diffs, [observed_order(diffs[i], diffs[i + 1]) for i in range(len(diffs) - 1)])
    return out


def cross_form_gap(primal: HodographField, reciprocal: HodographField, primal_coarse: HodographField):
    """(gap, Richardson error estimate) for W at t_min on the finer grid."""
    base = primal.levels[-1].psi
    Wp = primal.levels[-1].W
    Wr = CubicSpline(reciprocal.levels[-1].psi, reciprocal.levels[-1].W)(base)
    Wc = CubicSpline(primal_coarse.levels[-1].psi, primal_coarse.levels[-1].W)(base)
    return float(np.max(np.abs(Wp - Wr))), float(np.max(np.abs(Wp - Wc))) / 3.0


# ----------------------------------------------------------------------
# Check assembly
# ----------------------------------------------------------------------

def structural_checks(run: GridRun, params: DomainParams | None = None) -> list[CheckReport]:
    fld, xs, sol = run.fld, run.xs, run.sol
    hb, branch = fld.hb, fld.branch
    out = []

    if params is not None:
        wlo, whi, rlo, rhi = params.box()
        m, loc = _flat_argmin(fld, [np.minimum(np.minimum(lv.W, lv.Z) - wlo, whi - np.maximum(lv.W, lv.Z))
                                    for lv in fld.levels])
        out.append(CheckReport("invariant box W, Z", m > 0, m, loc,
                               detail=f"({wlo:.6g}, {whi:.6g})"))
        m, loc = _flat_argmin(fld, [np.minimum(lv.r - rlo, rhi - lv.r) for lv in fld.levels])
        out.append(CheckReport("r bounds", m > 0, m, loc, detail=f"[{rlo:.6g}, {rhi:.6g}]"))

    r_max = max(float(lv.r.max()) for lv in fld.levels)
    Z_min = min(float(lv.Z.min()) for lv in fld.levels)
    dm = check_strong_determinacy(r_max, Z_min, fld.region)
    out.append(CheckReport("strong determinacy", dm.passed, dm.margin, {"t": dm.t_worst}))

    m, loc = _flat_argmin(fld, [inv.jacobian_closed(fld, lv) for lv in fld.levels])
    out.append(CheckReport("jacobian positive", m > 0, m, loc))

    gap, loc = jacobian_gap(run)
    out.append(CheckReport("jacobian closed vs finite difference", gap < 0.05, 0.05 - gap, loc,
                           detail=f"max relative gap {gap:.3e}"))

    m, loc = _flat_argmin(fld, [2 * lv.t * sup_L(fld) - np.abs(lv.W - lv.Z) + STRUCTURAL_TOL
                                for lv in fld.levels])
    out.append(CheckReport("|W - Z| <= 2 t sup|L|", m > 0, m, loc, detail=f"sup|L| = {sup_L(fld):.6g}"))

    rep = inv.injectivity_check(fld, xs)
    out.append(CheckReport("injectivity", rep.passed, rep.min_step,
                           {"level": rep.worst_level}, detail=f"{rep.collisions} duplicate cells at {rep.resolution:g}"))

    # boundary node of each level reproduces the streamline and its tangent
    err = 0.0
    for lv, x in zip(fld.levels, xs):
        xb = float(hb.x_of_t(lv.t))
        bs = branch.at(lv.t)
        u, v = np.cos(lv.theta[0]) * bs.q, np.sin(lv.theta[0]) * bs.q
        err = max(err, abs(x[0] - xb), abs(lv.r[0] - float(hb.spec.phi(xb))),
                  abs(v / u - float(hb.spec.dphi(xb))))
    out.append(CheckReport("boundary reproduction", err < STRUCTURAL_TOL, STRUCTURAL_TOL - err))

    res = float(np.max(np.abs(branch.bernoulli_residual(sol.t))))
    out.append(CheckReport("Bernoulli residual", res < STRUCTURAL_TOL, STRUCTURAL_TOL - res))

    sc = sol.sonic
    P = np.column_stack([sc.x, sc.r])
    p_err = max(abs(sc.x[0] - hb.x1), abs(sc.r[0] - float(hb.spec.phi(hb.x1))))
    hits = inv.segments_intersect(P)
    out.append(CheckReport("sonic curve starts at P and is simple", p_err < STRUCTURAL_TOL and hits == 0,
                           STRUCTURAL_TOL - p_err, detail=f"{hits} self-intersections"))
    g = sc.grad_norm_sq
    out.append(CheckReport("sonic gradient norm bounded", bool(np.all(np.isfinite(g)) and g.min() > 0),
                           float(g.min()), detail=f"range [{g.min():.6g}, {g.max():.6g}] at t_min"))
    tr = sc.trace
    out.append(CheckReport("sonic extrapolation W = Z", tr.gap_extrapolated <= tr.bound_bottom,
                           tr.bound_bottom - tr.gap_extrapolated,
                           detail=f"max |W - Z| extrapolated {tr.gap_extrapolated:.3e}, bottom level {tr.gap_bottom:.3e}"))

    df = sol.df
    cell = _cell_size(run)
    d_end = _dist_to_polyline(np.array([df.x[0], df.r[0]]), P)
    f_end = abs(df.r[-1] - float(hb.spec.phi(df.x[-1])))
    ok = df.end_on_boundary and d_end <= 2 * cell and f_end <= 2 * cell
    out.append(CheckReport("DF endpoints", ok, 2 * cell - max(d_end, f_end),
                           detail=f"D off sonic curve {d_end:.3e}, F off streamline {f_end:.3e}, cell {cell:.3e}"))
    return out


def _cell_size(run: GridRun):
    lv, x = run.fld.levels[-1], run.xs[-1]
    return float(np.median(np.hypot(np.diff(x), np.diff(lv.r))))


def _dist_to_polyline(p, P):
    a, b = P[:-1], P[1:]
    ab = b - a
    s = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.einsum("ij,ij->i", ab, ab), 0, 1)
    return float(np.min(np.linalg.norm(a + s[:, None] * ab - p, axis=1)))


def _order_check(name, errs, min_order=MIN_ORDER, loc=None):
    orders = [observed_order(errs[i], errs[i + 1]) for i in range(len(errs) - 1)]
    worst = min(orders) - min_order
    monotone = all(errs[i + 1] < errs[i] for i in range(len(errs) - 1))
    return CheckReport(name, bool(worst >= 0 and monotone), worst, loc, list(errs),
                       detail="orders " + ", ".join(f"{o:.3f}" for o in orders))


def _stability_check(name, values, tol):
    rel = [abs(values[i + 1] - values[i]) / abs(values[i]) for i in range(len(values) - 1)]
    worst = max(rel)
    return CheckReport(name, bool(np.all(np.isfinite(values)) and worst < tol), tol - worst, None,
                       list(values), detail="relative changes " + ", ".join(f"{v:.3e}" for v in rel))


def refinement_checks(runs: list[GridRun], seed=0, reciprocal: HodographField | None = None) -> list[CheckReport]:
    """Checks that compare three or more grids, ordered coarse to fine."""
    out = []
    fields = [r.fld for r in runs]

    conv = self_convergence(fields)
    orders = {k: o for k, (_, o) in conv.items()}
    worst = min(min(min(o) - 1.7, 2.2 - max(o)) for o in orders.values())
    out.append(CheckReport("self-convergence order at t_min in [1.7, 2.2]", worst >= 0, worst, None,
                           [conv[k][0] for k in conv],
                           detail="; ".join(f"{k}: " + ", ".join(f"{v:.3f}" for v in o) for k, o in orders.items())))

    res = [angle_system_residual(r) for r in runs]
    out.append(_order_check("angle-variable system residual", [e for e, _ in res], loc=res[-1][1]))
    full = [full_system_residual(r) for r in runs]
    out.append(_order_check("potential-flow equation residual", [e[0] for e in full], loc=full[-1][2]))
    out.append(_order_check("irrotationality residual", [e[1] for e in full]))
    out.append(_order_check("physical gradient identities", [gradient_identity_error(r) for r in runs]))

    xp = [x_partials_error(r) for r in runs]
    out.append(_order_check("x_t closed form", [e[0] for e in xp]))
    c = _order_check("x_psi closed form", [e[1] for e in xp])
    c.detail += f"; variant with W instead of L misses by {xp[-1][2]:.3e}"
    out.append(c)

    out.append(_order_check("DF slope matches minus characteristic", [inv.df_slope_error(r.sol.df) for r in runs]))

    slope = degeneracy_slope(fields[-1])
    out.append(CheckReport("max|W - Z| linear in t near the sonic line", abs(slope - 1) <= 0.1,
                           0.1 - abs(slope - 1), None, [degeneracy_slope(f) for f in fields],
                           detail=f"log-log slope {slope:.4f}"))
    # the field-wide sup sits on the boundary data; the deepest level is the informative one
    out.append(_stability_check("sup|L| at t_min stable under refinement",
                                [float(np.max(np.abs(f.levels[-1].L))) for f in fields], 0.05))

    hq = [holder_hodograph(f, seed) for f in fields]
    for k in ("W", "Z", "L"):
        out.append(_stability_check(f"Hoelder 1/3 quotient of {k} at t_min", [h[k] for h in hq], 0.2))
    hp = [holder_physical(r, seed) for r in runs]
    for k in ("theta_x", "theta_r", "pi_x", "pi_r"):
        out.append(_stability_check(f"Hoelder 1/6 quotient of {k}", [h[k] for h in hp], 0.2))

    if reciprocal is not None:
        gap, est = cross_form_gap(fields[-1], reciprocal, fields[-2])
        out.append(CheckReport("primal and reciprocal forms agree on W", gap <= 3 * est, 3 * est - gap,
                               detail=f"gap {gap:.3e}, estimated error {est:.3e}"))
    return out


REFINEMENT_NAMES = (
    "self-convergence order at t_min in [1.7, 2.2]", "angle-variable system residual",
    "potential-flow equation residual", "irrotationality residual", "physical gradient identities",
    "x_t closed form", "x_psi closed form", "DF slope matches minus characteristic",
    "max|W - Z| linear in t near the sonic line", "sup|L| at t_min stable under refinement",
    *(f"Hoelder 1/3 quotient of {k} at t_min" for k in ("W", "Z", "L")),
    *(f"Hoelder 1/6 quotient of {k}" for k in ("theta_x", "theta_r", "pi_x", "pi_r")),
)


def run_all(fields: list[HodographField], params: DomainParams | None = None, seed=0,
            reciprocal: HodographField | None = None) -> list[CheckReport]:
    """Structural checks on the finest field plus refinement checks when >= 3 grids.

    ``fields`` is ordered coarse to fine with the level count doubling.
    """
    runs = [grid_run(f) for f in fields]
    out = structural_checks(runs[-1], params)
    if len(runs) >= 3:
        out += refinement_checks(runs, seed, reciprocal)
    else:
        out += [skipped(n) for n in REFINEMENT_NAMES]
    return out
