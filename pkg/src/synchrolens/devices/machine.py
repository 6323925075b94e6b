"""Synchronous machine models (6th, 4th and 2nd order) and their CF terms.

The machine dq frame follows v_d = v*sin(delta - theta), v_q = v*cos(delta -
theta); the map between network Park vectors and machine components is
z_m = j*exp(-j*delta)*z_net.  Stator fluxes satisfy psi = j*(R_s*i + v) with
psi_d = x''_d*i_d - E''_d and psi_q = x''_q*i_q - E''_q, which makes the
electrical torque tau_e = p + R_s*i^2 and gives a restoring power/angle
characteristic.  All device math is in machine base; time derivatives are in
1/s and are divided by omega_b wherever they enter per-unit CF expressions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cf import MIN_MAG, ComplexFrequency, chi_from_xi_terms
from ..errors import CurrentTooSmall, ParamDomain
from .base import XiTerms, from_machine_frame, to_machine_frame

SM_STATE_NAMES = {
    6: ("delta", "omega_r", "psi2_d", "psi2_q", "e1_d", "e1_q"),
    4: ("delta", "omega_r", "e1_d", "e1_q"),
    2: ("delta", "omega_r"),
}


@dataclass(frozen=True)
class SmParams:
    """Synchronous machine constants, machine base.

    order selects the model: 6 (subtransient), 4 (two-axis) or 2 (classical).
    For order 4 the subtransient reactances must equal the transient ones and
    T''=0; for order 2 additionally R_s=0, x_q=x'_q=x'_d and e'_q is the
    constant EMF e_q0 set at initialization.
    """

    order: int
    R_s: float
    x_d: float
    x_q: float
    x1_d: float
    x1_q: float
    x2_d: float
    x2_q: float
    x_l: float
    T1_d0: float
    T1_q0: float
    T2_d0: float
    T2_q0: float
    M: float
    D: float
    omega_b: float
    e_q0: float = 0.0

    def __post_init__(self):
        if self.order not in (2, 4, 6):
            raise ParamDomain(f"unsupported machine order {self.order}")
        if not (self.x_d >= self.x1_d >= self.x2_d > self.x_l > 0.0):
            raise ParamDomain(
                "d-axis reactances must satisfy x_d >= x'_d >= x''_d > x_l > 0"
            )
        if not (self.x_q >= self.x1_q >= self.x2_q > self.x_l):
            raise ParamDomain(
                "q-axis reactances must satisfy x_q >= x'_q >= x''_q > x_l"
            )
        if self.M <= 0.0:
            raise ParamDomain("M must be positive")
        if self.order >= 4 and not (self.T1_d0 > 0.0 and self.T1_q0 > 0.0):
            raise ParamDomain("transient time constants must be positive")
        if self.order == 6 and not (self.T2_d0 > 0.0 and self.T2_q0 > 0.0):
            raise ParamDomain("subtransient time constants must be positive")
        if self.order == 4 and not (self.x2_d == self.x1_d and self.x2_q == self.x1_q):
            raise ParamDomain("order-4 model requires x'' = x'")

    # gamma coefficients are always recomputed from the stored reactances.
    @property
    def gamma_d1(self):
        return (self.x2_d - self.x_l) / (self.x1_d - self.x_l)

    @property
    def gamma_q1(self):
        return (self.x2_q - self.x_l) / (self.x1_q - self.x_l)

    @property
    def gamma_d2(self):
        return (1.0 - self.gamma_d1) / (self.x1_d - self.x_l)

    @property
    def gamma_q2(self):
        return (1.0 - self.gamma_q1) / (self.x1_q - self.x_l)

    @property
    def n_states(self):
        return self.order

    @property
    def state_names(self):
        return SM_STATE_NAMES[self.order]


def sm6_params(R_s, x_d, x_q, x1_d, x1_q, x2_d, x2_q, x_l,
               T1_d0, T1_q0, T2_d0, T2_q0, M, D, omega_b):
    return SmParams(6, R_s, x_d, x_q, x1_d, x1_q, x2_d, x2_q, x_l,
                    T1_d0, T1_q0, T2_d0, T2_q0, M, D, omega_b)


def sm4_params(R_s, x_d, x_q, x1_d, x1_q, x_l, T1_d0, T1_q0, M, D, omega_b):
    return SmParams(4, R_s, x_d, x_q, x1_d, x1_q, x1_d, x1_q, x_l,
                    T1_d0, T1_q0, 0.0, 0.0, M, D, omega_b)


def sm2_params(x1_d, M, D, omega_b, x_l=None, e_q0=0.0):
    x_l = 0.5 * x1_d if x_l is None else x_l
    return SmParams(2, 0.0, x1_d, x1_d, x1_d, x1_d, x1_d, x1_d, x_l,
                    0.0, 0.0, 0.0, 0.0, M, D, omega_b, e_q0=e_q0)


def _emf_components(state, params):
    """Subtransient EMF terms E''_d, E''_q feeding the stator solve."""
    if params.order == 6:
        _, _, psi2_d, psi2_q, e1_d, e1_q = state
        g_d1, g_q1 = params.gamma_d1, params.gamma_q1
        E_d = g_d1 * e1_q + (1.0 - g_d1) * psi2_d
        E_q = -g_q1 * e1_d + (1.0 - g_q1) * psi2_q
    elif params.order == 4:
        e1_d, e1_q = state[2], state[3]
        E_d, E_q = e1_q, -e1_d
    else:
        E_d, E_q = params.e_q0, 0.0
    return E_d, E_q


def sm_currents(state, params, v_net):
    """Machine-frame terminal current (i_d + j*i_q) from the stator solve."""
    delta = state[0]
    v_m = to_machine_frame(v_net, delta)
    v_d, v_q = v_m.real, v_m.imag
    E_d, E_q = _emf_components(state, params)
    x2d, x2q, rs = params.x2_d, params.x2_q, params.R_s
    det = x2d * x2q + rs * rs
    i_d = (x2q * (E_d - v_q) - rs * (E_q + v_d)) / det
    i_q = (x2d * (E_q + v_d) + rs * (E_d - v_q)) / det
    return complex(i_d, i_q)


def sm_injection(state, params, v_net, i_m=None):
    """Current injected into the network (network frame, machine base)."""
    if i_m is None:
        i_m = sm_currents(state, params, v_net)
    return from_machine_frame(i_m, state[0])


def sm_torque(state, params, v_net, i_m=None):
    """Air-gap torque tau_e = psi_q*i_d - psi_d*i_q."""
    delta = state[0]
    v_m = to_machine_frame(v_net, delta)
    if i_m is None:
        i_m = sm_currents(state, params, v_net)
    psi = 1j * (params.R_s * i_m + v_m)
    return psi.imag * i_m.real - psi.real * i_m.imag


def sm_derivatives(state, params, v_net, tau_m, v_f, i_m=None):
    """Time derivatives of the machine states, 1/s."""
    omega_r = state[1]
    if i_m is None:
        i_m = sm_currents(state, params, v_net)
    tau_e = sm_torque(state, params, v_net, i_m)
    i_d, i_q = i_m.real, i_m.imag

    ddelta = params.omega_b * (omega_r - 1.0)
    domega = (tau_m - tau_e - params.D * (omega_r - 1.0)) / params.M
    if params.order == 2:
        return np.array([ddelta, domega])

    if params.order == 6:
        _, _, psi2_d, psi2_q, e1_d, e1_q = state
        dpsi2_d = (-psi2_d + e1_q - (params.x1_d - params.x_l) * i_d) / params.T2_d0
        dpsi2_q = (-psi2_q - e1_d - (params.x1_q - params.x_l) * i_q) / params.T2_q0
        de1_d = ((params.x_q - params.x1_q)
                 * (params.gamma_q1 * i_q - params.gamma_q2 * (psi2_q + e1_d))
                 - e1_d) / params.T1_q0
        de1_q = (v_f
                 - (params.x_d - params.x1_d)
                 * (params.gamma_d1 * i_d - params.gamma_d2 * (psi2_d - e1_q))
                 - e1_q) / params.T1_d0
        return np.array([ddelta, domega, dpsi2_d, dpsi2_q, de1_d, de1_q])

    # two-axis model: gamma_d1 = gamma_q1 = 1, subtransient states eliminated
    e1_d, e1_q = state[2], state[3]
    de1_d = ((params.x_q - params.x1_q) * i_q - e1_d) / params.T1_q0
    de1_q = (v_f - (params.x_d - params.x1_d) * i_d - e1_q) / params.T1_d0
    return np.array([ddelta, domega, de1_d, de1_q])


def sm6_derivatives(state, params, v_net, tau_m, v_f):
    if params.order != 6:
        raise ParamDomain("sm6_derivatives requires an order-6 parameter set")
    return sm_derivatives(state, params, v_net, tau_m, v_f)


def _emf_rates(state, params, v_net, v_f):
    """d/dt of E''_d and E''_q, 1/s.  Independent of tau_m."""
    if params.order == 2:
        return 0.0, 0.0
    i_m = sm_currents(state, params, v_net)
    i_d, i_q = i_m.real, i_m.imag
    if params.order == 6:
        _, _, psi2_d, psi2_q, e1_d, e1_q = state
        dpsi2_d = (-psi2_d + e1_q - (params.x1_d - params.x_l) * i_d) / params.T2_d0
        dpsi2_q = (-psi2_q - e1_d - (params.x1_q - params.x_l) * i_q) / params.T2_q0
        de1_d = ((params.x_q - params.x1_q)
                 * (params.gamma_q1 * i_q - params.gamma_q2 * (psi2_q + e1_d))
                 - e1_d) / params.T1_q0
        de1_q = (v_f
                 - (params.x_d - params.x1_d)
                 * (params.gamma_d1 * i_d - params.gamma_d2 * (psi2_d - e1_q))
                 - e1_q) / params.T1_d0
        g_d1, g_q1 = params.gamma_d1, params.gamma_q1
        dE_d = g_d1 * de1_q + (1.0 - g_d1) * dpsi2_d
        dE_q = -g_q1 * de1_d + (1.0 - g_q1) * dpsi2_q
        return dE_d, dE_q
    e1_d, e1_q = state[2], state[3]
    de1_d = ((params.x_q - params.x1_q) * i_q - e1_d) / params.T1_q0
    de1_q = (v_f - (params.x_d - params.x1_d) * i_d - e1_q) / params.T1_d0
    return de1_q, -de1_d


def sm_xi_terms(state, params, v_net, i_net, v_f=None) -> XiTerms:
    """Analytic (xi_a, k_rho, k_omega) of the injected-current CF.

    i_net is the injected current in machine base; it must match the stator
    solve up to sign (the terms are invariant under i -> -i).
    """
    if abs(i_net) < MIN_MAG:
        raise CurrentTooSmall(f"|i|={abs(i_net):.3e} below MIN_MAG")
    delta, omega_r = state[0], state[1]
    v_m = to_machine_frame(v_net, delta)
    i_m = to_machine_frame(i_net, delta)
    v_d, v_q = v_m.real, v_m.imag

    zdc = params.R_s - 1j * params.x2_d   # conj(R_s + j*x''_d)
    zqc = params.R_s - 1j * params.x2_q   # conj(R_s + j*x''_q)
    det = params.x2_d * params.x2_q + params.R_s ** 2
    b = np.conj(i_m) / (det * abs(i_m) ** 2)

    dE_d, dE_q = _emf_rates(state, params, v_net, v_f)
    dE_dn, dE_qn = dE_d / params.omega_b, dE_q / params.omega_b

    xi_a = 1j * omega_r + b * (1j * zqc * (dE_dn + omega_r * v_d)
                               - zdc * (dE_qn + omega_r * v_q))
    k_rho = -b * (zdc * v_d + 1j * zqc * v_q)
    k_omega = b * (zdc * v_q - 1j * zqc * v_d)
    return XiTerms(complex(xi_a), complex(k_rho), complex(k_omega))


def sm6_xi_terms(state, params, v_net, i_net, v_f=None):
    if params.order != 6:
        raise ParamDomain("sm6_xi_terms requires an order-6 parameter set")
    return sm_xi_terms(state, params, v_net, i_net, v_f)


def sm4_xi_terms(state, params, v_net, i_net, v_f=None):
    if params.order != 4:
        raise ParamDomain("sm4_xi_terms requires an order-4 parameter set")
    return sm_xi_terms(state, params, v_net, i_net, v_f)


def sm_chi_direct(state, params, v_net, i_net, eta, v_f=None):
    """Admittance CF evaluated in the grouped (direct) form.

    chi = (omega_r - omega)*(j - T) - rho*(1 - K) + derivative terms, which is
    the same algebra as composing the xi terms but evaluated independently.
    """
    if abs(i_net) < MIN_MAG:
        raise CurrentTooSmall(f"|i|={abs(i_net):.3e} below MIN_MAG")
    delta, omega_r = state[0], state[1]
    v_m = to_machine_frame(v_net, delta)
    i_m = to_machine_frame(i_net, delta)
    v_d, v_q = v_m.real, v_m.imag

    zdc = params.R_s - 1j * params.x2_d
    zqc = params.R_s - 1j * params.x2_q
    det = params.x2_d * params.x2_q + params.R_s ** 2
    b = np.conj(i_m) / (det * abs(i_m) ** 2)

    t_omega = b * (zdc * v_q - 1j * zqc * v_d)
    k_rho = -b * (zdc * v_d + 1j * zqc * v_q)
    dE_d, dE_q = _emf_rates(state, params, v_net, v_f)
    deriv_term = b * (1j * zqc * dE_d - zdc * dE_q) / params.omega_b

    chi = ((omega_r - eta.omega) * (1j - t_omega)
           - eta.rho * (1.0 - k_rho)
           + deriv_term)
    return ComplexFrequency(float(chi.real), float(chi.imag))


def sm2_chi(state, params, s, i_mag, eta) -> ComplexFrequency:
    """Classical-model admittance CF: (-j*s/(x'_d i^2) + 1)(-rho + j(omega_r - omega))."""
    if i_mag < MIN_MAG:
        raise CurrentTooSmall(f"|i|={i_mag:.3e} below MIN_MAG")
    omega_r = state[1]
    factor = -1j * s / (params.x1_d * i_mag ** 2) + 1.0
    chi = factor * (-eta.rho + 1j * (omega_r - eta.omega))
    return ComplexFrequency(float(chi.real), float(chi.imag))


def sm_chi_analytic(state, params, v_net, i_net, eta, v_f=None):
    """Boxed closed-form chi for the machine's order."""
    if params.order == 2:
        v_m = to_machine_frame(v_net, state[0])
        i_m = to_machine_frame(i_net, state[0])
        s = v_m * np.conj(i_m)
        return sm2_chi(state, params, complex(s), abs(i_m), eta)
    return sm_chi_direct(state, params, v_net, i_net, eta, v_f)


def sm_init(params, v_net, s_inj):
    """Steady state consistent with injecting s_inj at terminal voltage v_net.

    Returns (state, tau_m, v_f); for order 2 the constant EMF is returned in
    place of v_f and must be stored in the parameter set.
    """
    i_net = np.conj(s_inj / v_net) if s_inj != 0.0 else 0.0j
    w = v_net + (params.R_s + 1j * params.x_q) * i_net
    delta = float(np.angle(w))
    v_m = to_machine_frame(v_net, delta)
    i_m = to_machine_frame(i_net, delta)
    v_d, v_q = v_m.real, v_m.imag
    i_d, i_q = i_m.real, i_m.imag

    e1_q = v_q + params.R_s * i_q + params.x1_d * i_d
    e1_d = v_d + params.R_s * i_d - params.x1_q * i_q
    v_f = e1_q + (params.x_d - params.x1_d) * i_d
    tau_m = sm_torque_from(v_m, i_m, params.R_s)

    if params.order == 2:
        state = np.array([delta, 1.0])
        return state, tau_m, e1_q
    if params.order == 4:
        state = np.array([delta, 1.0, e1_d, e1_q])
        return state, tau_m, v_f
    psi2_d = e1_q - (params.x1_d - params.x_l) * i_d
    psi2_q = -e1_d - (params.x1_q - params.x_l) * i_q
    state = np.array([delta, 1.0, psi2_d, psi2_q, e1_d, e1_q])
    return state, tau_m, v_f


def sm_torque_from(v_m, i_m, r_s):
    psi = 1j * (r_s * i_m + v_m)
    return psi.imag * i_m.real - psi.real * i_m.imag


def sm_chi_from_terms(state, params, v_net, i_net, eta, v_f=None):
    """Compose chi through the xi-terms pathway (cross-check route)."""
    terms = sm_xi_terms(state, params, v_net, i_net, v_f)
    return chi_from_xi_terms(terms.xi_a, terms.k_rho, terms.k_omega, eta)
