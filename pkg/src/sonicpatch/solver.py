"""Characteristic marching for (W, Z, r, theta) toward the sonic line.

Levels are lines ``t = const`` swept downward from the right edge
``t = delta`` of the domain to ``t_min``. Every node of a new level
receives ``W`` along the plus characteristic and ``Z, r, theta`` along
the minus characteristic, each traced back to the previous level or to
the boundary curve, with a Heun (explicit predictor, trapezoidal
corrector) update.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from .boundary import HodographBoundary
from .domain import OmegaRegion
from .eos import BranchState, SupersonicBranch
from .numerics import vectorized_bisect


class DeterminacyViolation(RuntimeError):
    pass


class InvariantEscape(RuntimeError):
    pass


@dataclass
class SolverConfig:
    n_levels: int = 200
    n_psi: int | None = None  # nodes on the widest level; default 2 * n_levels
    t_min: float | None = None  # default t_min_fraction * delta
    t_min_fraction: float = 0.01
    cfl_like: float = 0.5
    interp_order: int = 2
    form: str = "primal"
    t_guard: float | None = None  # below this level L is extrapolated instead of differenced

    def __post_init__(self):
        if self.n_levels < 2:
            raise ValueError("n_levels must be at least 2")
        if self.interp_order not in (1, 2, 3):
            raise ValueError("interp_order must be 1, 2 or 3")
        if self.form not in ("primal", "reciprocal"):
            raise ValueError("form must be 'primal' or 'reciprocal'")
        if self.t_min is not None and self.t_min <= 0:
            raise ValueError("t_min must be positive")


# ----------------------------------------------------------------------
# Right-hand sides
# ----------------------------------------------------------------------

@dataclass
class CharRates:
    lambda_plus: np.ndarray
    lambda_minus: np.ndarray
    rhs_W: np.ndarray
    rhs_Z: np.ndarray
    rhs_r: np.ndarray
    rhs_theta: np.ndarray
    rhs_x: np.ndarray
    rhs_r_plus: np.ndarray
    rhs_theta_plus: np.ndarray
    rhs_x_plus: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    rhs_Wbar: np.ndarray
    rhs_Zbar: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray


def rates_at(bs: BranchState, W, Z, r, theta, L=None) -> CharRates:
    """Characteristic slopes and right-hand sides at branch state ``bs``.

    Slopes are d(psi)/dt along each family; right-hand sides are
    derivatives along the corresponding characteristic with respect to t.
    """
    t, pi, F, K, q = bs.t, bs.pi, bs.F, bs.K, bs.q
    if np.any(W <= 0) or np.any(Z <= 0):
        raise InvariantEscape("nonpositive W or Z")
    if L is None:
        L = (W - Z) / (2 * t)
    sn, cs = np.sin(theta), np.cos(theta)
    sin_a = t * sn + pi * cs
    sin_b = t * sn - pi * cs
    cos_a = t * cs - pi * sn
    cos_b = t * cs + pi * sn
    mu = r * t * t * q / (2 * F)
    lam_p = mu / Z
    lam_m = -mu / W
    core = K + 2 * (1 - t * t)
    rhs_W = ((1 + K) * W / (Z * F) * L
             + (core + (sin_b + 4 * t * sn) / (4 * Z)) * W * t / F
             - sin_b * t / (4 * F) + t * sn * sn / (2 * F * Z))
    rhs_Z = (-(1 + K) * Z / (W * F) * L
             + (core - (sin_a + 4 * t * sn) / (4 * W)) * Z * t / F
             + sin_a * t / (4 * F) + t * sn * sn / (2 * F * W))
    two_fw = 2 * F * W
    two_fz = 2 * F * Z
    Wb, Zb = 1.0 / W, 1.0 / Z
    H1 = ((K + 2 - t * t) * (Wb - Zb) / (2 * F) - core * Wb / F
          - Wb / (2 * F) * (0.5 * sin_b * (Zb - Wb) + 2 * t * Zb * sn + Wb * Zb * sn * sn))
    H2 = ((K + 2 - t * t) * (Zb - Wb) / (2 * F) - core * Zb / F
          - Zb / (2 * F) * (0.5 * sin_a * (Zb - Wb) - 2 * t * Wb * sn + Wb * Zb * sn * sn))
    # (Wb - Zb)/(2t) written through L to avoid the cancellation
    sing = -L * Wb * Zb
    omega = np.arcsin(np.clip(pi, -1, 1))
    return CharRates(
        lambda_plus=lam_p, lambda_minus=lam_m, rhs_W=rhs_W, rhs_Z=rhs_Z,
        rhs_r=-t * r * sin_a / two_fw,
        rhs_theta=t * pi * (sn + 2 * t * W) / two_fw,
        rhs_x=-t * r * cos_a / two_fw,
        rhs_r_plus=t * r * sin_b / two_fz,
        rhs_theta_plus=t * pi * (sn - 2 * t * Z) / two_fz,
        rhs_x_plus=t * r * cos_b / two_fz,
        H1=H1, H2=H2, rhs_Wbar=sing + t * H1, rhs_Zbar=-sing + t * H2,
        alpha=theta + omega, beta=theta - omega,
    )


def char_rates(branch: SupersonicBranch, t, W, Z, r, theta, L=None) -> CharRates:
    return rates_at(branch.at(t), W, Z, r, theta, L)


# ----------------------------------------------------------------------
# Field containers
# ----------------------------------------------------------------------

@dataclass
class Level:
    t: float
    psi: np.ndarray
    W: np.ndarray
    Z: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    L: np.ndarray
    # final minus/plus characteristic feet; s = level reached (t of the
    # previous level, or the boundary crossing), psi_* = foot location
    s_minus: np.ndarray = field(default=None)
    psi_minus: np.ndarray = field(default=None)
    s_plus: np.ndarray = field(default=None)
    psi_plus: np.ndarray = field(default=None)

    @property
    def n(self):
        return self.psi.size


@dataclass
class HodographField:
    levels: list[Level]
    region: OmegaRegion
    cfg: SolverConfig

    @property
    def hb(self) -> HodographBoundary:
        return self.region.hb

    @property
    def branch(self) -> SupersonicBranch:
        return self.region.hb.branch

    @property
    def t_levels(self):
        return np.array([lv.t for lv in self.levels])

    @property
    def t_min(self):
        return self.levels[-1].t

    def columns(self):
        cols = {k: [] for k in ("t", "psi", "W", "Z", "r", "theta", "L")}
        for lv in self.levels:
            cols["t"].append(np.full(lv.n, lv.t))
            for k in ("psi", "W", "Z", "r", "theta", "L"):
                cols[k].append(getattr(lv, k))
        return {k: np.concatenate(v) for k, v in cols.items()}

    def to_csv(self, path):
        write_csv(path, self.columns())


def write_csv(path, cols: dict, comment=None):
    """Full-precision CSV; an optional ``comment`` becomes a leading '# ' line."""
    names = list(cols)
    rows = np.column_stack([np.asarray(cols[k], dtype=float) for k in names])
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def read_csv(path) -> dict:
    with open(path, newline="") as fh:
        rd = csv.reader(line for line in fh if not line.startswith("#"))
        names = next(rd)
        data = np.array([[float(v) for v in row] for row in rd], dtype=float)
    if data.size == 0:
        data = data.reshape(0, len(names))
    return {k: data[:, j] for j, k in enumerate(names)}


def field_from_columns(cols: dict, region: OmegaRegion, cfg: SolverConfig) -> HodographField:
    """Rebuild a field from exported columns (feet are not restored)."""
    t = cols["t"]
    levels = []
    # levels are exported in marching order; split where t changes
    cut = np.flatnonzero(np.diff(t) != 0) + 1
    for idx in np.split(np.arange(t.size), cut):
        levels.append(Level(float(t[idx[0]]), *(cols[k][idx] for k in ("psi", "W", "Z", "r", "theta", "L"))))
    return HodographField(levels, region, cfg)


# ----------------------------------------------------------------------
# Marching
# ----------------------------------------------------------------------

def _interpolator(psi, values, order):
    if psi.size == 1:
        return lambda s: np.repeat(values[:, :1], np.size(s), axis=1)
    if order == 1 or psi.size == 2:
        return lambda s: np.vstack([np.interp(s, psi, v) for v in values])
    if order == 2:
        return PchipInterpolator(psi, values, axis=1, extrapolate=True)
    return CubicSpline(psi, values, axis=1, bc_type="not-a-knot", extrapolate=True)


def level_grid(region: OmegaRegion, t_levels, n_psi):
    """Uniformly spaced psi nodes on each level with a common target spacing."""
    h = float(region.width(t_levels[-1])) / (n_psi - 1)
    grids = []
    for k, t in enumerate(t_levels):
        lo, hi = float(region.psi_tilde(t)), float(region.psi_bar(t))
        if k == 0 or hi - lo <= 0:
            grids.append(np.array([lo]))
            continue
        n = max(2, int(np.ceil((hi - lo) / h - 1e-9)) + 1)
        grids.append(np.linspace(lo, hi, n))
    return grids


class _Marcher:
    def __init__(self, region: OmegaRegion, cfg: SolverConfig):
        self.region, self.cfg = region, cfg
        self.hb = region.hb
        self.branch = region.hb.branch
        self.recip = cfg.form == "reciprocal"

    # state vectors are rows (A, B, r, theta) with (A, B) = (W, Z) or (1/W, 1/Z)
    def to_wz(self, U):
        if self.recip:
            return 1.0 / U[0], 1.0 / U[1]
        return U[0], U[1]

    def rates(self, t, U, L=None):
        W, Z = self.to_wz(U)
        cr = rates_at(self.branch.at(t), W, Z, U[2], U[3], L)
        if self.recip:
            plus = cr.rhs_Wbar
            minus = np.vstack([cr.rhs_Zbar, cr.rhs_r, cr.rhs_theta])
        else:
            plus = cr.rhs_W
            minus = np.vstack([cr.rhs_Z, cr.rhs_r, cr.rhs_theta])
        return cr.lambda_plus, cr.lambda_minus, plus, minus

    def boundary_state(self, s):
        W, Z, r, th, L, _ = self.hb.data_at(s)
        if self.recip:
            W, Z = 1.0 / W, 1.0 / Z
        return np.vstack([W, Z, r, th]), L

    def crossing(self, psi, lam, t_new, t_old):
        """Level s in [t_new, t_old] where psi + lam (s - t_new) meets the boundary."""
        hb = self.hb

        def g(s):
            return hb.psi_tilde(s) - psi - lam * (s - t_new)

        return vectorized_bisect(g, np.full_like(psi, t_new), np.full_like(psi, t_old))

    def foot(self, fam, psi, lam, t_new, prev: Level, interp, t_lo_edge, strict=True):
        """Values, rates and step length at the foot of characteristic ``fam``.

        With ``strict`` a foot above the barrier is a determinacy violation;
        the predictor passes False because its slope is taken from the
        previous level and may overshoot.
        """
        t_old = prev.t
        dt = t_old - t_new
        pf = psi + lam * dt
        lo, hi = float(self.region.psi_tilde(t_old)), float(self.region.psi_bar(t_old))
        tol = 1e-12 * max(1.0, abs(hi))
        if strict and np.any(pf > hi + tol):
            j = int(np.argmax(pf - hi))
            raise DeterminacyViolation(
                f"{fam} characteristic from (t={t_new:.6g}, psi={psi[j]:.6g}) leaves the domain "
                f"through the barrier (foot psi={pf[j]:.6g} > {hi:.6g})")
        pf = np.minimum(pf, hi)
        cross = pf <= lo
        cross[0] |= t_lo_edge
        s = np.full_like(psi, t_old)
        U = np.empty((4, psi.size))
        L = np.empty(psi.size)
        inner = ~cross
        if inner.any():
            vals = interp(pf[inner])
            U[:, inner] = vals[:4]
            if self.guarded(t_old):
                L[inner] = vals[4]
            else:
                W, Z = self.to_wz(U[:, inner])
                L[inner] = (W - Z) / (2 * t_old)
        if cross.any():
            sc = self.crossing(psi[cross], lam[cross], t_new, t_old)
            if t_lo_edge:
                sc[0] = t_new
            s[cross] = sc
            pf[cross] = self.hb.psi_tilde(sc)
            Ub, Lb = self.boundary_state(sc)
            U[:, cross] = Ub
            L[cross] = Lb
        lp, lm, rp, rm = self.rates(s, U, L)
        return U, s, pf, (lp if fam == "plus" else lm), (rp if fam == "plus" else rm)

    def guarded(self, t):
        return self.cfg.t_guard is not None and t < self.cfg.t_guard

    def L_extrapolated(self, t, psi):
        # quadratic in t through the three most recent levels, at fixed psi
        pts = self.history[-3:]
        ts = np.array([p.t for p in pts])
        Ls = np.vstack([np.interp(psi, p.psi, p.L) for p in pts])
        coef = np.polynomial.polynomial.polyfit(ts, Ls, 2)
        return np.polynomial.polynomial.polyval(t, coef)

    def step(self, prev: Level, t_new, psi):
        cfg = self.cfg
        V = np.vstack([prev.W, prev.Z, prev.r, prev.theta, prev.L])
        if self.recip:
            V = V.copy()
            V[0], V[1] = 1.0 / V[0], 1.0 / V[1]
        interp = _interpolator(prev.psi, V, cfg.interp_order)
        # initial slope guess from the previous level
        Ug = interp(np.clip(psi, prev.psi[0], prev.psi[-1]))
        lp0, lm0, _, _ = self.rates(np.full(psi.size, prev.t), Ug[:4])

        Up, sp, _, lpf, rpf = self.foot("plus", psi, lp0, t_new, prev, interp, True, strict=False)
        Um, sm, _, lmf, rmf = self.foot("minus", psi, lm0, t_new, prev, interp, True, strict=False)
        tau_p, tau_m = sp - t_new, sm - t_new
        Ustar = np.vstack([Up[0] - tau_p * rpf, Um[1:] - tau_m * rmf])
        L_star = self.L_extrapolated(t_new, psi) if self.guarded(t_new) else None
        lps, lms, rps, rms = self.rates(np.full(psi.size, t_new), Ustar, L_star)

        Up2, sp2, pfp, lpf2, rpf2 = self.foot("plus", psi, 0.5 * (lpf + lps), t_new, prev, interp, True)
        Um2, sm2, pfm, lmf2, rmf2 = self.foot("minus", psi, 0.5 * (lmf + lms), t_new, prev, interp, True)
        tau_p, tau_m = sp2 - t_new, sm2 - t_new
        U = np.vstack([Up2[0] - 0.5 * tau_p * (rpf2 + rps), Um2[1:] - 0.5 * tau_m * (rmf2 + rms)])
        # the lowest node sits on the boundary curve
        Ub, _ = self.boundary_state(np.array([t_new]))
        U[:, 0] = Ub[:, 0]
        W, Z = self.to_wz(U)
        if np.any(~np.isfinite(U)) or np.any(W <= 0) or np.any(Z <= 0):
            bad = int(np.flatnonzero(~np.isfinite(W) | (W <= 0) | ~np.isfinite(Z) | (Z <= 0))[0])
            raise InvariantEscape(f"W or Z left the positive range at t={t_new:.6g}, psi={psi[bad]:.6g}")
        L_new = self.L_extrapolated(t_new, psi) if self.guarded(t_new) else (W - Z) / (2 * t_new)
        lv = Level(t_new, psi, W, Z, U[2], U[3], L_new,
                   s_minus=sm2, psi_minus=pfm, s_plus=sp2, psi_plus=pfp)
        return lv


def march(region: OmegaRegion, cfg: SolverConfig) -> HodographField:
    """March the characteristic system from t = delta down to t_min."""
    delta = region.delta
    t_min = cfg.t_min if cfg.t_min is not None else cfg.t_min_fraction * delta
    if not 0 < t_min < delta:
        raise ValueError("t_min must lie in (0, delta)")
    n_psi = cfg.n_psi or 2 * cfg.n_levels
    t_levels = np.linspace(delta, t_min, cfg.n_levels + 1)
    grids = level_grid(region, t_levels, n_psi)
    h_psi = float(region.width(t_min)) / (n_psi - 1)
    dt = t_levels[0] - t_levels[1]
    mk = _Marcher(region, cfg)

    W, Z, r, th, L, _ = region.hb.data_at(np.array([delta]))
    levels = [Level(delta, grids[0], W, Z, r, th, L)]
    mk.history = levels
    lam_max = 0.0
    for k in range(1, len(t_levels)):
        lv = mk.step(levels[-1], t_levels[k], grids[k])
        levels.append(lv)
        mu = lv.r * lv.t**2 * mk.branch.at(lv.t).q / (2 * mk.branch.at(lv.t).F)
        lam_max = max(lam_max, float(np.max(mu / np.minimum(lv.W, lv.Z))))
    if lam_max * dt > cfg.cfl_like * h_psi:
        raise ValueError(f"step ratio {lam_max * dt / h_psi:.3f} exceeds cfl_like={cfg.cfl_like}; "
                         "increase n_levels")
    return HodographField(levels, region, cfg)


# ----------------------------------------------------------------------
# Sonic line
# ----------------------------------------------------------------------

@dataclass
class SonicTrace:
    psi: np.ndarray
    W: np.ndarray
    Z: np.ndarray
    merged: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    L: np.ndarray
    x: np.ndarray | None
    gap_bottom: float  # max |W - Z| on the deepest level
    bound_bottom: float  # 2 t_min sup|L|
    gap_extrapolated: float  # max |W - Z| after extrapolation
    sup_L: float


def _at_psi(level: Level, psi, name):
    return CubicSpline(level.psi, getattr(level, name))(psi) if level.n > 3 else \
        np.interp(psi, level.psi, getattr(level, name))


def sonic_extrapolate(fld: HodographField, x_levels=None) -> SonicTrace:
    """Extrapolate the two deepest levels to t = 0 at fixed psi.

    W, Z and L are extrapolated linearly in t. r, theta and x have
    vanishing t-derivative at the sonic line, so they are extrapolated
    linearly in t^2. The boundary point P' is prepended with its exact data.
    """
    lo, hi = fld.levels[-2], fld.levels[-1]
    t1, t2 = hi.t, lo.t
    psi_top = float(fld.region.psi_bar(0.0))
    psi = hi.psi[hi.psi <= psi_top]
    if psi[-1] < psi_top:
        psi = np.append(psi, psi_top)

    def lin(name, src_hi=None, src_lo=None):
        a = np.interp(psi, hi.psi, getattr(hi, name)) if src_hi is None else src_hi
        b = _at_psi(lo, psi, name) if src_lo is None else src_lo
        return a - t1 * (b - a) / (t2 - t1)

    def quad(a, b):
        return (t2**2 * a - t1**2 * b) / (t2**2 - t1**2)

    W0, Z0, L0 = lin("W"), lin("Z"), lin("L")
    r0 = quad(np.interp(psi, hi.psi, hi.r), _at_psi(lo, psi, "r"))
    th0 = quad(np.interp(psi, hi.psi, hi.theta), _at_psi(lo, psi, "theta"))
    x0 = None
    if x_levels is not None:
        xh, xl = x_levels[-1], x_levels[-2]
        x0 = quad(np.interp(psi, hi.psi, xh), CubicSpline(lo.psi, xl)(psi) if lo.n > 3 else np.interp(psi, lo.psi, xl))
    Wb, Zb, rb, thb, Lb, xb = fld.hb.data_at(np.array([0.0]))
    sup_L = max(float(np.max(np.abs(lv.L))) for lv in fld.levels)
    gap = float(np.max(np.abs(hi.W - hi.Z)))
    psi = np.concatenate(([0.0], psi))
    W0 = np.concatenate((Wb, W0))
    Z0 = np.concatenate((Zb, Z0))
    L0 = np.concatenate((Lb, L0))
    r0 = np.concatenate((rb, r0))
    th0 = np.concatenate((thb, th0))
    if x0 is not None:
        x0 = np.concatenate((xb, x0))
    return SonicTrace(psi, W0, Z0, 0.5 * (W0 + Z0), r0, th0, L0, x0,
                      gap, 2 * t1 * sup_L, float(np.max(np.abs(W0 - Z0))), sup_L)
