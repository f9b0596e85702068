"""Determinate domain in the (t, psi) plane and its a priori constants."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .boundary import BoundaryData, HodographBoundary


@dataclass(frozen=True)
class DomainParams:
    """Constants of the existence argument for one configuration.

    ``phi0``/``phi1`` are the minimum and maximum of the streamline arc.
    """

    Kbar: float
    kappa: float
    delta0: float
    delta1: float
    delta2: float
    delta: float
    Ktilde: float
    m_tilde: float
    m0_hat: float
    M0_hat: float
    phi0: float
    phi1: float
    t0: float

    def g(self, t):
        """Comparison function (m0/2) exp(Kbar t^2)."""
        return 0.5 * self.m0_hat * np.exp(self.Kbar * np.asarray(t) ** 2)

    def box(self):
        """Invariant box: (W/Z lower, W/Z upper, r lower, r upper)."""
        growth = self.t0**2 / (self.kappa * self.m0_hat)
        return (0.5 * self.m0_hat, self.M0_hat + 1.0,
                self.phi0 * np.exp(-growth), self.phi1 * np.exp(growth))

    def to_dict(self):
        return asdict(self)


def compute_params(hb: HodographBoundary, data: BoundaryData, n_samples=512) -> DomainParams:
    branch = hb.branch
    t0 = hb.t0
    delta0 = min(1.0 / np.sqrt(2.0), t0)
    t = np.linspace(0.0, delta0, n_samples)
    bs = branch.at(t)
    inv_K = 1.0 / bs.K
    m0 = data.m0_hat
    Kbar = 1.0 + max(1.0 + (2 * m0 + 1) / m0 * inv_K.max(),
                     1.0 + (2 * m0**2 + 2 * m0 + 2) / m0**2 * inv_K.max())
    # F >= K only while (1 - t^2)^2 >= t^2 K, so bound both from below
    kappa = 2.0 * min(bs.K.min(), bs.F.min())
    if kappa <= 0 or m0 <= 0:
        raise ValueError("degenerate constants: kappa and m0_hat must be positive")
    delta1 = min(delta0, np.sqrt(np.log(2.0) / Kbar), kappa * m0 / 3.0)
    tt = t[1:]
    m_tilde = float((hb.dpsi_tilde_formula(tt) / tt).min())
    m_tilde = min(m_tilde, float(hb.dpsi_tilde_formula(1e-9) / 1e-9))
    iK = 2 * bs.a**2 * bs.K  # i gamma_a^2 p'' f
    Ktilde = float((8 * data.phi_max / (iK * m0) * np.exp(2 * t0**2 / (iK * m0))).max())
    delta2 = min(delta0, 0.5 * m_tilde / Ktilde)
    return DomainParams(float(Kbar), float(kappa), float(delta0), float(delta1), float(delta2),
                        float(min(delta1, delta2)), Ktilde, m_tilde, m0, data.M0_hat,
                        data.phi_min, data.phi_max, float(t0))


@dataclass(frozen=True)
class OmegaRegion:
    """Region between the boundary image and the cubic barrier."""

    hb: HodographBoundary
    delta: float
    Ktilde: float

    def psi_tilde(self, t):
        return self.hb.psi_tilde(t)

    def psi_bar(self, t):
        t = np.asarray(t, dtype=float)
        return self.hb.psi_tilde(self.delta) + self.Ktilde / 3.0 * (t**3 - self.delta**3)

    @property
    def Dprime(self):
        return (0.0, float(self.psi_bar(0.0)))

    @property
    def Tprime(self):
        return (self.delta, float(self.hb.psi_tilde(self.delta)))

    def width(self, t):
        return self.psi_bar(t) - self.psi_tilde(t)


def barrier_curve(region: OmegaRegion, t):
    return region.psi_bar(t)


def make_region(hb: HodographBoundary, delta, Ktilde) -> OmegaRegion:
    if not 0 < delta <= hb.t0:
        raise ValueError("delta must lie in (0, t0]")
    region = OmegaRegion(hb, float(delta), float(Ktilde))
    if region.Dprime[1] <= 0:
        raise ValueError(f"barrier falls below the axis: psi_bar(0)={region.Dprime[1]:.3e}; "
                         "reduce delta or the barrier constant")
    t = np.linspace(0.0, delta, 513)[1:-1]
    if np.any(region.width(t) <= 0):
        raise ValueError("barrier does not stay above the boundary curve")
    return region


def boundary_slope_ratio(hb: HodographBoundary, t):
    """lambda_plus / t^2 evaluated with the boundary values of (r, Z)."""
    t = np.asarray(t, dtype=float)
    _, Z, r, _, _, _ = hb.data_at(t)
    bs = hb.branch.at(t)
    return r * bs.q / (2 * bs.F * Z)


def effective_region(hb: HodographBoundary, delta_user, Ktilde_user=None, safety=2.0) -> OmegaRegion:
    """Region for a user-chosen right edge.

    Without an explicit barrier constant, ``safety`` times the largest
    plus-characteristic slope coefficient seen on the boundary is used;
    the march then re-checks the inequality on the computed field.
    """
    if Ktilde_user is None:
        t = np.linspace(0.0, delta_user, 513)
        Ktilde_user = safety * float(boundary_slope_ratio(hb, t).max())
    return make_region(hb, delta_user, Ktilde_user)


@dataclass(frozen=True)
class DeterminacyMargin:
    passed: bool
    margin: float
    t_worst: float


def check_strong_determinacy(r_max, Z_min, region: OmegaRegion, n_samples=512) -> DeterminacyMargin:
    """Worst margin of Ktilde - lambda_plus/t^2 over [0, delta].

    Both sides carry the factor t^2, so the comparison is made on the
    coefficients and stays meaningful at t = 0.
    """
    if Z_min <= 0:
        return DeterminacyMargin(False, float("-inf"), 0.0)
    t = np.linspace(0.0, region.delta, n_samples)
    bs = region.hb.branch.at(t)
    lhs = r_max * bs.q / (2 * bs.F * Z_min)
    margin = region.Ktilde - lhs
    k = int(np.argmin(margin))
    return DeterminacyMargin(bool(margin[k] > 0), float(margin[k]), float(t[k]))
