"""Streamline arc data and its image in the partial hodograph plane."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial
from scipy import optimize

from .eos import SupersonicBranch
from .numerics import cheb_adaptive, vectorized_bisect
from .reports import ConditionResult, ValidationReport


@dataclass(frozen=True)
class StreamlineSpec:
    """Arc r = phi(x) carrying the Mach data pihat(x) on [x1, x3]."""

    phi: Callable
    dphi: Callable
    d2phi: Callable
    d3phi: Callable
    pihat: Callable
    dpihat: Callable
    x1: float
    x3: float

    @classmethod
    def from_polynomials(cls, phi_coeffs, pihat_coeffs, x1, x3):
        """Coefficients in ascending powers of x; derivatives are exact."""
        phi = Polynomial(phi_coeffs)
        pihat = Polynomial(pihat_coeffs)
        return cls(phi, phi.deriv(1), phi.deriv(2), phi.deriv(3),
                   pihat, pihat.deriv(1), float(x1), float(x3))

    def grid(self, n=2048):
        return np.linspace(self.x1, self.x3, n)

    def t_of_x(self, x):
        pv = np.asarray(self.pihat(x), dtype=float)
        return np.sqrt(np.clip(1.0 - pv * pv, 0.0, None))


def reference_streamline() -> StreamlineSpec:
    return StreamlineSpec.from_polynomials([1.0, 0.5, -0.25], [1.0, -0.3], 0.0, 0.4)


def _branch_for(spec, eos, consts, n=2048):
    t_max = float(spec.t_of_x(spec.grid(n)).max())
    return SupersonicBranch(eos, consts, min(max(t_max, 1e-3) * (1 + 1e-9), 0.999))


def _cond(name, margin, x):
    margin = np.where(np.isfinite(margin), margin, -np.inf)
    k = int(np.argmin(margin))
    ok = bool(margin[k] > 0)
    return ConditionResult(name, ok, float(margin[k]), float(x[k]), "" if ok else f"{name} violated")


def validate_streamline(spec: StreamlineSpec, eos, consts, n=2048, branch=None) -> ValidationReport:
    """Check the arc hypotheses on a dense grid.

    The coupling condition needs the branch thermodynamics, so it is
    only evaluated once the Mach data themselves are admissible.
    """
    x = spec.grid(n)
    phi, d1, d2 = spec.phi(x), spec.dphi(x), spec.d2phi(x)
    pv, dpv = spec.pihat(x), spec.dpihat(x)
    conds = [
        _cond("phi(x1) > 0", np.atleast_1d(spec.phi(spec.x1)), np.array([spec.x1])),
        _cond("phi > 0", phi, x),
        _cond("phi' > 0", d1, x),
        _cond("phi'' < 0", -d2, x),
        _cond("pihat' < 0", -dpv * np.ones_like(x), x),
        _cond("pihat(x1) = 1", np.array([1e-12 - abs(float(spec.pihat(spec.x1)) - 1.0)]),
              np.array([spec.x1])),
        _cond("0 < pihat < 1 on (x1, x3]", np.minimum(pv[1:], 1.0 - pv[1:]), x[1:]),
    ]
    if all(c.passed for c in conds):
        branch = branch or _branch_for(spec, eos, consts, n)
        bs = branch.at(spec.t_of_x(x))
        lhs = d2 / (1 + d1**2) - 4 * bs.a**2 * bs.t / bs.F1 * dpv
        conds.append(_cond("streamline coupling < 0", -lhs, x))
    else:
        conds.append(ConditionResult("streamline coupling < 0", False, float("nan"), None,
                                     "not evaluated: arc hypotheses failed"))
    return ValidationReport(conds)


def theta_hat(spec, x):
    """Flow angle along the streamline, arctan(phi')."""
    return np.arctan(spec.dphi(x))


def bcd_hat(spec, branch: SupersonicBranch, x):
    """Boundary values (b, c, d) of (W, Z, -L) along the arc."""
    x = np.asarray(x, dtype=float)
    t = spec.t_of_x(x)
    bs = branch.at(t)
    pv, dpv = spec.pihat(x), spec.dpihat(x)
    d1, d2 = spec.dphi(x), spec.d2phi(x)
    pref = spec.phi(x) * np.cos(theta_hat(spec, x)) / (2.0 * pv)
    mach_term = 4 * bs.a**2 / bs.F1 * dpv
    curv = d2 / (1 + d1**2)
    b = pref * (mach_term * t - curv)
    c = -pref * (mach_term * t + curv)
    d = -pref * mach_term
    return b, c, d


def potential_slope(spec, branch, x):
    """d(potential)/dx along the arc: flow speed times arc-length density."""
    x = np.asarray(x, dtype=float)
    return branch.at(spec.t_of_x(x)).q * np.sqrt(1 + spec.dphi(x) ** 2)


def potential_on_arc(spec, branch, x=None, phi1=0.0):
    """Velocity potential along the arc with phi(x1) = phi1.

    Returns the Chebyshev antiderivative when ``x`` is None, otherwise its
    values at ``x``.
    """
    slope = cheb_adaptive(lambda s: potential_slope(spec, branch, s), spec.x1, spec.x3)
    pot = slope.integ(lbnd=spec.x1, k=phi1)
    return pot if x is None else pot(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class BoundaryData:
    """Arc data with the recorded bounds used by the a priori estimates."""

    spec: StreamlineSpec
    branch: SupersonicBranch
    m0_hat: float
    M0_hat: float
    phi_min: float
    phi_max: float
    phi1: float = 0.0

    def theta_hat(self, x):
        return theta_hat(self.spec, x)

    def bcd(self, x):
        return bcd_hat(self.spec, self.branch, x)

    def phi_pot(self, x):
        return potential_on_arc(self.spec, self.branch, x, self.phi1)


def boundary_data(spec, branch, n=2048, phi1=0.0) -> BoundaryData:
    x = spec.grid(n)
    b, c, d = bcd_hat(spec, branch, x)
    allv = np.concatenate([b, c, d])
    phi = spec.phi(x)
    return BoundaryData(spec, branch, float(allv.min()), float(allv.max()),
                        float(phi.min()), float(phi.max()), phi1)


class HodographBoundary:
    """Image of the arc in the (t, psi) plane.

    ``x(t)`` is an even analytic function of ``t`` and is stored as a
    Chebyshev series in ``t**2``; the curve ``psi_tilde(t)`` is its
    composition with the arc potential.
    """

    def __init__(self, spec: StreamlineSpec, branch: SupersonicBranch, phi1=0.0):
        self.spec, self.branch, self.phi1 = spec, branch, phi1
        self.x1, self.x3 = spec.x1, spec.x3
        self.t0 = float(spec.t_of_x(spec.x3))
        if self.t0 > branch.t_max * (1 + 1e-9):
            raise ValueError("branch table does not cover the arc")
        self._pot = potential_on_arc(spec, branch, None, phi1)
        self._dpot = self._pot.deriv()

        def x_exact(s):
            out = np.empty_like(s)
            for k, sk in enumerate(s):
                target = np.sqrt(max(0.0, 1.0 - sk))
                if target >= float(spec.pihat(spec.x1)):
                    out[k] = spec.x1
                    continue
                out[k] = optimize.brentq(lambda xx: float(spec.pihat(xx)) - target,
                                         spec.x1, spec.x3, xtol=1e-15, rtol=1e-15)
            return out

        self._x_of_s = cheb_adaptive(x_exact, 0.0, self.t0**2)
        self._dx_ds = self._x_of_s.deriv()
        # psi_tilde = s H(s) with H the mean of d(psi)/ds over [0, s]; this keeps
        # relative accuracy down to the sonic point
        u, w = np.polynomial.legendre.leggauss(40)
        u, w = 0.5 * (u + 1), 0.5 * w

        def mean_slope(s):
            su = np.outer(s, u)
            return (self._dpot(self._x_of_s(su)) * self._dx_ds(su)) @ w

        self._H = cheb_adaptive(mean_slope, 0.0, self.t0**2)
        self.psi0 = float(self.psi_tilde(self.t0))
        x = spec.grid(2048)
        if np.any(np.diff(self.psi_of_x(x)) <= 0) or np.any(np.diff(self.t_of_x(x)) <= 0):
            raise ValueError("arc image is not monotone in the hodograph plane")

    # arc parametrization
    def t_of_x(self, x):
        return self.spec.t_of_x(x)

    def psi_of_x(self, x):
        return self._pot(np.asarray(x, dtype=float)) - self.phi1

    def x_of_t(self, t):
        t = np.asarray(t, dtype=float)
        return self._x_of_s(t * t)

    def psi_tilde(self, t):
        t = np.asarray(t, dtype=float)
        return t * t * self._H(t * t)

    def dpsi_tilde(self, t):
        t = np.asarray(t, dtype=float)
        return self._dpot(self.x_of_t(t)) * 2.0 * t * self._dx_ds(t * t)

    def dpsi_tilde_formula(self, t):
        """Closed-form slope of the boundary curve from the arc data."""
        t = np.asarray(t, dtype=float)
        x = self.x_of_t(t)
        bs = self.branch.at(t)
        sp = self.spec
        return -bs.q * np.sqrt(1 + sp.dphi(x) ** 2) / (sp.dpihat(x) * sp.pihat(x)) * t

    def t_of_psi(self, psi):
        psi = np.asarray(psi, dtype=float)
        return vectorized_bisect(lambda t: self.psi_tilde(t) - psi,
                                 np.zeros_like(psi), np.full_like(psi, self.t0))

    def x_of_psi(self, psi):
        psi = np.asarray(psi, dtype=float)
        return vectorized_bisect(lambda x: self.psi_of_x(x) - psi,
                                 np.full_like(psi, self.x1), np.full_like(psi, self.x3))

    # data carried along the curve, parametrized by t
    def data_at(self, t):
        """(W, Z, r, theta, L, x) on the boundary curve at level ``t``."""
        t = np.asarray(t, dtype=float)
        x = self.x_of_t(t)
        sp = self.spec
        bs = self.branch.at(t)
        pv, dpv = bs.pi, sp.dpihat(x)
        d1, d2 = sp.dphi(x), sp.d2phi(x)
        th = np.arctan(d1)
        r = sp.phi(x)
        pref = r * np.cos(th) / (2.0 * pv)
        mach_term = 4 * bs.a**2 / bs.F1 * dpv
        curv = d2 / (1 + d1**2)
        W = pref * (mach_term * t - curv)
        Z = -pref * (mach_term * t + curv)
        L = pref * mach_term
        return W, Z, r, th, L, x


def hodograph_boundary(spec, branch, phi1=0.0) -> HodographBoundary:
    return HodographBoundary(spec, branch, phi1)
