"""Barotropic equation of state, Bernoulli branch and pointwise coefficients.

Units are geometric (speed of light = 1). Densities are mass-energy
densities, so the enthalpy density is ``i = rho + p``.

The supersonic branch is parametrized by ``t = cos(omega)`` where
``sin(omega) = 1/M``; ``t = 0`` is sonic. :class:`SupersonicBranch`
tabulates the branch once so the marching code can evaluate all
thermodynamic coefficients as vectorized functions of ``t``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, interpolate, optimize

from .numerics import cheb_adaptive, vectorized_bisect
from .reports import ConditionResult, ValidationReport

_QUAD = dict(epsabs=1e-14, epsrel=1e-13, limit=200)


class InadmissibleEOS(ValueError):
    """Raised when a pressure law violates the causality/convexity gate."""

    def __init__(self, report: ValidationReport):
        self.report = report
        reasons = "; ".join(c.reason for c in report.failures())
        super().__init__(reasons)


def admissibility_report(p, dp, d2p, rho_max, n_samples=256) -> ValidationReport:
    """Sample 0 < p' < 1, p'' > 0 and derivative consistency on (0, rho_max)."""
    rho = rho_max * np.arange(1, n_samples + 1) / (n_samples + 1)
    with np.errstate(all="ignore"):
        d1 = np.asarray(dp(rho), dtype=float) * np.ones_like(rho)
        d2 = np.asarray(d2p(rho), dtype=float) * np.ones_like(rho)
        h = 1e-4 * np.minimum(rho, rho_max - rho)
        fd1 = (p(rho + h) - p(rho - h)) / (2 * h)
        fd2 = (dp(rho + h) - dp(rho - h)) / (2 * h)
        err1 = np.abs(fd1 - d1) / np.maximum(np.abs(d1), 1e-300)
        err2 = np.abs(fd2 - d2) / np.maximum(np.abs(d2), 1e-300)

    def cond(name, margin):
        margin = np.where(np.isfinite(margin), margin, -np.inf)
        k = int(np.argmin(margin))
        ok = bool(margin[k] > 0)
        return ConditionResult(name, ok, float(margin[k]), float(rho[k]),
                               "" if ok else f"{name} violated")

    return ValidationReport([
        cond("p' > 0", d1),
        cond("p' < 1", 1.0 - d1),
        cond("p'' > 0", np.where(np.isfinite(d2), d2, -np.inf)),
        cond("dp consistent with p", 1e-6 - err1),
        cond("d2p consistent with dp", 1e-6 - err2),
    ])


@dataclass(frozen=True)
class EquationOfState:
    """Pressure law p(rho) with its first two derivatives.

    Construction fails with :class:`InadmissibleEOS` unless
    ``0 < p' < 1`` and ``p'' > 0`` hold on a sampling grid of
    ``(0, rho_max)``. Callables must accept numpy arrays.
    """

    p: Callable
    dp: Callable
    d2p: Callable
    rho_max: float
    rho_ref: float
    name: str = "custom"

    def __post_init__(self):
        if not 0 < self.rho_ref < self.rho_max:
            raise ValueError("rho_ref must lie in (0, rho_max)")
        report = admissibility_report(self.p, self.dp, self.d2p, self.rho_max)
        if not report.passed:
            raise InadmissibleEOS(report)

    def _check(self, rho):
        rho = np.asarray(rho, dtype=float)
        if np.any((rho <= 0) | (rho >= self.rho_max)):
            raise ValueError(f"density outside (0, {self.rho_max})")
        return rho


def quadratic_eos(k=0.25, rho_ref=0.5) -> EquationOfState:
    """p = k rho^2, admissible on (0, 1/(2k))."""
    return EquationOfState(
        p=lambda r: k * np.asarray(r) ** 2,
        dp=lambda r: 2 * k * np.asarray(r),
        d2p=lambda r: 2 * k * np.ones_like(np.asarray(r, dtype=float)),
        rho_max=1.0 / (2 * k),
        rho_ref=rho_ref,
        name="quadratic",
    )


def linear_eos(c2, rho_max, rho_ref) -> EquationOfState:
    """p = c2 rho. Never admissible (p'' = 0); kept so the gate can be exercised."""
    return EquationOfState(
        p=lambda r: c2 * np.asarray(r),
        dp=lambda r: c2 * np.ones_like(np.asarray(r, dtype=float)),
        d2p=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        rho_max=rho_max,
        rho_ref=rho_ref,
        name="linear",
    )


def polytropic_eos(kappa, gamma, rho_ref) -> EquationOfState:
    """p = kappa rho^gamma with gamma > 1, cut where p' reaches 1."""
    if gamma <= 1:
        raise ValueError("polytropic EOS needs gamma > 1")
    rho_max = (1.0 / (kappa * gamma)) ** (1.0 / (gamma - 1.0))
    return EquationOfState(
        p=lambda r: kappa * np.asarray(r) ** gamma,
        dp=lambda r: kappa * gamma * np.asarray(r) ** (gamma - 1),
        d2p=lambda r: kappa * gamma * (gamma - 1) * np.asarray(r) ** (gamma - 2),
        rho_max=rho_max,
        rho_ref=rho_ref,
        name="polytropic",
    )


def tabulated_eos(rho, p, rho_ref) -> EquationOfState:
    """Pressure law from a table of (rho, p) samples.

    Secant slopes are placed at interval midpoints, anchored by p'(0) = 0,
    and joined by a monotone cubic (PCHIP). Convex data therefore give a
    non-decreasing p' and the admissibility gate decides the rest.
    ``rho_max`` is the last tabulated density.
    """
    rho = np.asarray(rho, dtype=float)
    p = np.asarray(p, dtype=float)
    if rho[0] == 0.0:
        rho, p = rho[1:], p[1:]
    knots_r = np.concatenate(([0.0], rho))
    knots_p = np.concatenate(([0.0], p))
    slopes = np.diff(knots_p) / np.diff(knots_r)
    mids = 0.5 * (knots_r[1:] + knots_r[:-1])
    xs = np.concatenate(([0.0], mids, [rho[-1]]))
    ys = np.concatenate(([0.0], slopes, [slopes[-1]]))
    dp = interpolate.PchipInterpolator(xs, ys, extrapolate=True)
    pp = dp.antiderivative()
    d2p = dp.derivative()
    return EquationOfState(
        p=lambda r: pp(r), dp=lambda r: dp(r), d2p=lambda r: d2p(r),
        rho_max=float(rho[-1]), rho_ref=rho_ref, name="tabulated",
    )


# ----------------------------------------------------------------------
# Pointwise thermodynamics
# ----------------------------------------------------------------------

def lorentz(v):
    return 1.0 / np.sqrt(1.0 - np.asarray(v) ** 2)


def sound_speed(eos: EquationOfState, rho):
    """a = sqrt(p'(rho))."""
    return np.sqrt(eos.dp(eos._check(rho)))


def _log_excess(eos, lo, hi):
    # integral of p/(s(s+p)); bounded integrand as s -> 0 whenever p = o(s)
    def g(s):
        ps = float(eos.p(s))
        return ps / (s * (s + ps))
    val, _ = integrate.quad(g, lo, hi, **_QUAD)
    return val


def number_density(eos: EquationOfState, rho):
    """Proper number density normalized so that n(rho_ref) = 1.

    Uses n = (rho/rho_ref) exp(-int_{rho_ref}^{rho} p/(s(s+p)) ds), an
    algebraic rearrangement of exp(int ds/(s+p)) that keeps the
    quadrature integrand bounded near rho = 0.
    """
    rho = eos._check(rho)

    def one(r):
        return (r / eos.rho_ref) * np.exp(-_log_excess(eos, eos.rho_ref, r))

    if rho.ndim == 0:
        return float(one(float(rho)))
    return np.array([one(r) for r in rho.ravel()]).reshape(rho.shape)


def enthalpy_per_particle(eos, rho):
    """i/n, increasing in rho."""
    rho = eos._check(rho)
    return (rho + eos.p(rho)) / number_density(eos, rho)


def rest_mass_per_particle(eos: EquationOfState) -> float:
    """lim_{rho -> 0} i/n."""
    slope0 = float(eos.dp(np.array(0.0)))
    return eos.rho_ref * (1.0 + slope0) * np.exp(-_log_excess(eos, 0.0, eos.rho_ref))


@dataclass(frozen=True)
class BernoulliConstants:
    """Constants of the Bernoulli branch ``gamma(q) i/n = mg_hat``.

    ``rho_sonic`` and ``q_sonic`` locate the state with M = 1.
    """

    m: float
    mg_hat: float
    q_hat: float
    rho_sonic: float
    q_sonic: float


def bernoulli_constants(eos: EquationOfState, mg_hat: float) -> BernoulliConstants:
    m = rest_mass_per_particle(eos)
    if mg_hat < m:
        raise ValueError("Bernoulli constant below the rest-mass floor")
    q_hat = float(np.sqrt(1.0 - (m / mg_hat) ** 2))

    def h(r):
        a = float(np.sqrt(eos.dp(r)))
        return float(lorentz(a)) * enthalpy_per_particle(eos, r) - mg_hat

    hi = eos.rho_max * (1 - 1e-9)
    rho_s = optimize.brentq(h, 1e-12 * eos.rho_max, hi, xtol=1e-15, rtol=1e-15)
    return BernoulliConstants(m, float(mg_hat), q_hat, rho_s, float(np.sqrt(eos.dp(rho_s))))


def sonic_normalized_constants(eos: EquationOfState, rho_star: float) -> BernoulliConstants:
    """Constants placing the sonic state at ``rho_star``."""
    a = float(sound_speed(eos, rho_star))
    mg_hat = float(lorentz(a)) * enthalpy_per_particle(eos, rho_star)
    return bernoulli_constants(eos, mg_hat)


def limit_speed(eos, consts: BernoulliConstants) -> float:
    """Speed at which the density on the branch vanishes."""
    return float(np.sqrt(1.0 - (rest_mass_per_particle(eos) / consts.mg_hat) ** 2))


def bernoulli_density(eos, consts: BernoulliConstants, q) -> float:
    """Density on the Bernoulli branch at flow speed ``q``."""
    if not 0.0 < q < consts.q_hat:
        raise ValueError(f"q={q} outside (0, q_hat={consts.q_hat})")
    target = np.log(consts.mg_hat / float(lorentz(q)))

    def h(r):
        return np.log(enthalpy_per_particle(eos, r)) - target

    lo = 1e-14 * eos.rho_max
    hi = eos.rho_max * (1 - 1e-12)
    if h(hi) < 0:
        raise ValueError("no density on the branch at this speed (bracket failure)")
    if h(lo) >= 0:
        return lo
    return optimize.brentq(h, lo, hi, xtol=1e-16, rtol=1e-15)


@dataclass(frozen=True)
class FlowState:
    rho: float
    p: float
    a: float
    i: float
    n: float
    q: float
    gamma: float
    gamma_a: float
    M: float
    theta: float
    omega: float
    pi_var: float
    d2p: float


def state_from_rho(eos, consts, rho, theta=0.0) -> FlowState:
    """Branch state at density ``rho``; the speed follows from Bernoulli."""
    n = number_density(eos, rho)
    p = float(eos.p(rho))
    i = rho + p
    gamma = consts.mg_hat * n / i
    if gamma < 1.0:
        raise ValueError("density not reachable on this Bernoulli branch")
    q = float(np.sqrt(1.0 - 1.0 / gamma**2))
    a = float(np.sqrt(eos.dp(rho)))
    ga = float(lorentz(a))
    M = gamma * q / (a * ga)
    pi_var = 1.0 / M
    omega = float(np.arcsin(pi_var)) if M >= 1.0 else float("nan")
    return FlowState(float(rho), p, a, i, n, q, gamma, ga, M, theta, omega, pi_var,
                     float(eos.d2p(np.asarray(rho))))


def flow_state(eos, consts, q, theta=0.0) -> FlowState:
    return state_from_rho(eos, consts, bernoulli_density(eos, consts, q), theta)


def da_dq(state: FlowState) -> float:
    """Slope of sound speed along the branch, -i q gamma^2 p'' / (2 a^3)."""
    s = state
    return -s.i * s.q * s.gamma**2 * s.d2p / (2.0 * s.a**3)


def f_F1_F2(state: FlowState):
    """Return (f(a), F1, F2) at a supersonic state."""
    s = state
    f = s.gamma_a**2 + 2.0 * s.a**4 / (s.i * s.d2p)
    F1 = 2.0 * s.i * s.d2p * s.gamma_a**2 * f + 4.0 * s.a**2 * s.pi_var**2
    cos_w = np.sqrt(max(0.0, 1.0 - s.pi_var**2))
    sin2w = 2.0 * s.pi_var * cos_w
    F2 = s.i * s.q * s.gamma * s.gamma_a * s.d2p * f * cos_w * sin2w
    return f, F1, F2


def pi_from_q(eos, consts, q) -> float:
    """sin of the Mach angle at speed ``q`` on the supersonic branch."""
    if not consts.q_sonic - 1e-14 <= q < consts.q_hat:
        raise ValueError("q outside [q_sonic, q_hat)")
    s = flow_state(eos, consts, q)
    return min(1.0, s.pi_var)


def _rho_of_pi(eos, consts, pi_var):
    if not 0.0 < pi_var <= 1.0:
        raise ValueError("pi outside (0, 1]")
    if pi_var >= 1.0:
        return consts.rho_sonic

    def h(r):
        return state_from_rho(eos, consts, r).pi_var - pi_var

    lo = 1e-12 * consts.rho_sonic
    if h(lo) > 0:
        raise ValueError("pi below the branch minimum")
    return optimize.brentq(h, lo, consts.rho_sonic, xtol=1e-16, rtol=1e-15)


def q_from_pi(eos, consts, pi_var) -> float:
    """Inverse of :func:`pi_from_q`."""
    return state_from_rho(eos, consts, _rho_of_pi(eos, consts, pi_var)).q


def state_from_pi(eos, consts, pi_var, theta=0.0) -> FlowState:
    return state_from_rho(eos, consts, _rho_of_pi(eos, consts, pi_var), theta)


def F_of_t(eos, consts, t) -> float:
    """F(t) = (1 - t^2) F1 / (4 a^2) along the branch, evaluated exactly."""
    s = state_from_pi(eos, consts, float(np.sqrt(1.0 - t * t)))
    _, F1, _ = f_F1_F2(s)
    return (1.0 - t * t) * F1 / (4.0 * s.a**2)


def I_of_pi(eos, consts, pi_var, k0, branch: "SupersonicBranch | None" = None) -> float:
    """Integral of 2a^2/(y F1) from sin(k0) to ``pi_var``."""

    def integrand(y):
        if branch is not None:
            bs = branch.at(np.sqrt(max(0.0, 1.0 - y * y)))
            a2, F1 = float(bs.a**2), float(bs.F1)
        else:
            s = state_from_pi(eos, consts, y)
            a2, F1 = s.a**2, f_F1_F2(s)[1]
        return 2.0 * a2 / (y * F1)

    val, _ = integrate.quad(integrand, np.sin(k0), pi_var, epsabs=1e-12, epsrel=1e-12, limit=200)
    return val


# ----------------------------------------------------------------------
# Tabulated branch in t
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class BranchState:
    t: np.ndarray
    rho: np.ndarray
    a: np.ndarray
    gamma_a: np.ndarray
    q: np.ndarray
    gamma: np.ndarray
    pi: np.ndarray
    i: np.ndarray
    d2p: np.ndarray
    f: np.ndarray
    F1: np.ndarray
    K: np.ndarray
    F: np.ndarray


class SupersonicBranch:
    """Density along the branch as a Chebyshev series in s = t^2.

    Every other coefficient is an explicit function of ``rho`` and ``t``.
    Working in ``s`` keeps the series analytic because all branch
    quantities are even in ``t``. Nodes come from exact quadrature, so
    the surrogate error sits at round-off level (checked in the tests).
    """

    def __init__(self, eos, consts, t_max):
        if not 0.0 < t_max < 1.0:
            raise ValueError("t_max must lie in (0, 1)")
        self.eos, self.consts, self.t_max = eos, consts, float(t_max)
        s_max = self.t_max**2
        rho_hi = consts.rho_sonic
        rho_lo = _rho_of_pi(eos, consts, float(np.sqrt(1.0 - s_max)))

        def s_of_rho(rho):
            return np.array([1.0 - state_from_rho(eos, consts, r).pi_var ** 2 for r in rho])

        s_cheb = cheb_adaptive(s_of_rho, rho_lo, rho_hi, tol=1e-15, max_deg=128)

        def rho_of_s(s):
            return vectorized_bisect(lambda r: -(s_cheb(r) - s), np.full_like(s, rho_lo),
                                     np.full_like(s, rho_hi))

        self._rho = cheb_adaptive(rho_of_s, 0.0, s_max, tol=1e-15, max_deg=128)

    def rho(self, t):
        t = np.asarray(t, dtype=float)
        if np.any((t < 0) | (t > self.t_max * (1 + 1e-12))):
            raise ValueError(f"t outside [0, {self.t_max}]")
        return self._rho(t * t)

    def at(self, t) -> BranchState:
        t = np.asarray(t, dtype=float)
        eos = self.eos
        rho = self.rho(t)
        a = np.sqrt(eos.dp(rho))
        ga = 1.0 / np.sqrt(1.0 - a * a)
        pi = np.sqrt(1.0 - t * t)
        s = a * ga / pi
        q = s / np.sqrt(1.0 + s * s)
        gamma = np.sqrt(1.0 + s * s)
        i = rho + eos.p(rho)
        d2p = eos.d2p(rho)
        f = ga**2 + 2.0 * a**4 / (i * d2p)
        K = i * d2p * ga**2 * f / (2.0 * a * a)
        F1 = 2.0 * i * d2p * ga**2 * f + 4.0 * a * a * pi * pi
        F = pi * pi * (K + pi * pi)
        return BranchState(t, rho, a, ga, q, gamma, pi, i, d2p, f, F1, K, F)

    def bernoulli_residual(self, t):
        """|gamma i/n - mg_hat| at the given t values (exact number density)."""
        bs = self.at(t)
        n = number_density(self.eos, bs.rho)
        return np.abs(bs.gamma * bs.i / n - self.consts.mg_hat)
