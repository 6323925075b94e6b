"""First-order induction motor (slip state) and its admittance CF."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cf import ComplexFrequency
from ..errors import InitInfeasible, ParamDomain, SlipSingular


@dataclass(frozen=True)
class ImParams:
    """Induction machine constants, machine base."""

    r_S: float
    x_S: float
    r_R1: float
    x_R1: float
    x_mu: float
    H_m: float
    omega_b: float

    def __post_init__(self):
        if min(self.x_S, self.x_R1, self.x_mu, self.H_m, self.r_R1) <= 0.0:
            raise ParamDomain("motor reactances, rotor resistance and H_m must be positive")
        if self.r_S < 0.0:
            raise ParamDomain("stator resistance cannot be negative")

    @property
    def x(self):
        return self.x_S + self.x_R1

    @property
    def x_t(self):
        return self.x + self.x_mu


def _rotor_r(params: ImParams, sigma: float) -> float:
    if sigma == 0.0:
        raise SlipSingular("slip is zero; rotor branch is singular")
    return params.r_S + params.r_R1 / sigma


def im_torque(params: ImParams, sigma: float, v_mag: float) -> float:
    """Electrical torque at slip sigma and voltage magnitude v_mag."""
    r = _rotor_r(params, sigma)
    return (params.r_R1 / sigma) * v_mag ** 2 / (r ** 2 + params.x ** 2)


def im_power(params: ImParams, sigma: float, v_mag: float):
    """(p, q) drawn by the motor, including the magnetizing branch."""
    r = _rotor_r(params, sigma)
    z2 = r ** 2 + params.x ** 2
    p = r * v_mag ** 2 / z2
    q = v_mag ** 2 / params.x_mu + params.x * v_mag ** 2 / z2
    return p, q


def im_admittance(params: ImParams, sigma: float) -> complex:
    """Complex admittance seen from the terminals at slip sigma."""
    r = _rotor_r(params, sigma)
    return 1.0 / (1j * params.x_mu) + 1.0 / complex(r, params.x)


def im_injection(params: ImParams, sigma: float, v_net: complex) -> complex:
    """Current injected into the network (load: the negative drawn current)."""
    return -im_admittance(params, sigma) * v_net


def im_derivatives(sigma: float, params: ImParams, v_mag: float, tau_m: float):
    """Slip derivative: 2*H_m*sigma_dot = tau_m - tau_e."""
    tau_e = im_torque(params, sigma, v_mag)
    return (tau_m - tau_e) / (2.0 * params.H_m)


def im_chi(sigma: float, params: ImParams, sigma_dot: float) -> ComplexFrequency:
    """Closed-form admittance CF driven by the rotor-resistance rate."""
    r = _rotor_r(params, sigma)
    if r == 0.0:
        raise SlipSingular("total rotor-branch resistance is zero")
    r_dot = -(params.r_R1 / sigma ** 2) * sigma_dot
    x, x_t, x_mu = params.x, params.x_t, params.x_mu
    z2 = r ** 2 + x ** 2
    bracket = (r ** 2 * (x_t ** 2 - x ** 2)
               + 1j * r * x_mu * (r ** 2 - x ** 2 - x_mu * x)) / (z2 * (r ** 2 + x_t ** 2))
    chi = -(r_dot / r) * bracket / params.omega_b
    return ComplexFrequency(float(chi.real), float(chi.imag))


def im_pullout(params: ImParams, v_mag: float = 1.0):
    """(sigma*, tau_max): slip and torque at the pull-out point."""
    sigma_star = params.r_R1 / np.hypot(params.r_S, params.x)
    return sigma_star, im_torque(params, sigma_star, v_mag)


def im_init(params: ImParams, v_mag: float, tau_m: float,
            tol: float = 1e-12, max_iter: int = 200) -> float:
    """Equilibrium slip on the stable branch via bisection of tau_e - tau_m.

    The stable branch is sigma in (0, sigma_pullout]; raises InitInfeasible
    when tau_m exceeds the pull-out torque at this voltage.
    """
    if tau_m < 0.0:
        raise InitInfeasible("generator-mode initialization not supported")
    sigma_star, tau_max = im_pullout(params, v_mag)
    if tau_m > tau_max:
        raise InitInfeasible(
            f"tau_m={tau_m:.4f} above pull-out torque {tau_max:.4f} at v={v_mag:.4f}"
        )
    if tau_m == 0.0:
        raise InitInfeasible("zero-torque equilibrium is the singular sigma=0 point")
    lo, hi = 1e-12, sigma_star
    # tau_e is increasing on (0, sigma*): bisect the monotone branch
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if im_torque(params, mid, v_mag) < tau_m:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * max(1.0, hi):
            break
    return 0.5 * (lo + hi)
