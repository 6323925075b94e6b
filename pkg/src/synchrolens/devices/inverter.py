"""Grid-following and grid-forming converter models with their CF terms.

The GFL model lives in its PLL frame (z_pll = z_net * exp(-j*theta_pll));
states are the two current-PI integrators, the measured currents, the PLL
integrator and the PLL angle.  The GFM is an EMF behind z_t with droop on
filtered power and integral control on filtered voltage; its measurement
filters use first-order lags with time constants T_v (voltage) and T_p
(power).  State derivatives are 1/s and are divided by omega_b wherever they
enter per-unit CF expressions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cf import MIN_MAG, ComplexFrequency
from ..errors import CurrentTooSmall, ModulationTooSmall, ParamDomain
from .base import XiTerms

GFL_STATE_NAMES = ("x_d", "x_q", "i_dm", "i_qm", "x_pll", "theta_pll")
GFM_STATE_NAMES = ("e", "delta", "v_m", "p_m")


@dataclass(frozen=True)
class GflParams:
    """Grid-following converter constants."""

    K_p: float
    K_i: float
    T_m: float
    K_p_pll: float
    K_i_pll: float
    v_dc0: float
    z_f: complex
    y_f: complex
    i_dref: float
    i_qref: float
    omega_b: float
    omega_ref: float = 1.0

    def __post_init__(self):
        if abs(self.z_f) == 0.0:
            raise ParamDomain("filter impedance must be nonzero")
        if self.T_m <= 0.0:
            raise ParamDomain("current-measurement time constant must be positive")

    @property
    def i_ref(self):
        return complex(self.i_dref, self.i_qref)


def gfl_modulation(state, params: GflParams) -> complex:
    x_bar = complex(state[0], state[1])
    i_m = complex(state[2], state[3])
    return x_bar + params.K_p * (params.i_ref - i_m)


def gfl_pll_speed(state, params: GflParams, v_q: float):
    """(delta_omega_pll, omega_tilde) in pu."""
    d_omega = params.K_p_pll * v_q + state[4]
    return d_omega, d_omega + params.omega_ref


def gfl_current_pll(state, params: GflParams, v_pll: complex) -> complex:
    """Injected current in the PLL frame from the filter algebraic relation."""
    m = gfl_modulation(state, params)
    return (m * params.v_dc0 - (1.0 + params.z_f * params.y_f) * v_pll) / params.z_f


def gfl_injection(state, params: GflParams, v_net: complex) -> complex:
    theta = state[5]
    v_pll = v_net * np.exp(-1j * theta)
    return gfl_current_pll(state, params, v_pll) * np.exp(1j * theta)


def gfl_derivatives(state, params: GflParams, v_net: complex):
    """Time derivatives of (x_d, x_q, i_dm, i_qm, x_pll, theta_pll), 1/s."""
    theta = state[5]
    v_pll = v_net * np.exp(-1j * theta)
    i_pll = gfl_current_pll(state, params, v_pll)
    d_omega, _ = gfl_pll_speed(state, params, v_pll.imag)
    dx_d = params.K_i * (params.i_dref - state[2])
    dx_q = params.K_i * (params.i_qref - state[3])
    di_dm = (i_pll.real - state[2]) / params.T_m
    di_qm = (i_pll.imag - state[3]) / params.T_m
    dx_pll = params.K_i_pll * v_pll.imag
    dtheta = params.omega_b * d_omega
    return np.array([dx_d, dx_q, di_dm, di_qm, dx_pll, dtheta])


def _gfl_modulation_rates(state, params: GflParams, i_pll: complex):
    """(m_dot/m, alpha_dot) of the modulation vector, 1/s."""
    m = gfl_modulation(state, params)
    m2 = abs(m) ** 2
    if m2 < MIN_MAG ** 2:
        raise ModulationTooSmall(f"|m|={abs(m):.3e} below MIN_MAG")
    dm_d = (params.K_i * (params.i_dref - state[2])
            - (params.K_p / params.T_m) * (i_pll.real - state[2]))
    dm_q = (params.K_i * (params.i_qref - state[3])
            - (params.K_p / params.T_m) * (i_pll.imag - state[3]))
    m_rate = (m.real * dm_d + m.imag * dm_q) / m2
    a_rate = (m.real * dm_q - m.imag * dm_d) / m2
    return m_rate, a_rate


def gfl_xi_terms(state, params: GflParams, v_net: complex, i_net: complex) -> XiTerms:
    """(xi_a, k_rho, k_omega) for the converter current CF."""
    theta = state[5]
    v_pll = v_net * np.exp(-1j * theta)
    i_pll = i_net * np.exp(-1j * theta)
    if abs(i_pll) < MIN_MAG:
        raise CurrentTooSmall(f"|i|={abs(i_pll):.3e} below MIN_MAG")
    m = gfl_modulation(state, params)
    m_rate, a_rate = _gfl_modulation_rates(state, params, i_pll)
    _, omega_t = gfl_pll_speed(state, params, v_pll.imag)
    front = m * params.v_dc0 / (params.z_f * i_pll)
    xi_a = front * (m_rate / params.omega_b
                    + 1j * (a_rate / params.omega_b + omega_t))
    k_rho = 1.0 - front
    k_omega = 1j * (1.0 - front)
    return XiTerms(complex(xi_a), complex(k_rho), complex(k_omega))


def gfl_chi(state, params: GflParams, v_net: complex, i_net: complex,
            eta: ComplexFrequency) -> ComplexFrequency:
    """Boxed closed-form chi for the GFL converter."""
    theta = state[5]
    v_pll = v_net * np.exp(-1j * theta)
    i_pll = i_net * np.exp(-1j * theta)
    if abs(i_pll) < MIN_MAG:
        raise CurrentTooSmall(f"|i|={abs(i_pll):.3e} below MIN_MAG")
    m = gfl_modulation(state, params)
    m_rate, a_rate = _gfl_modulation_rates(state, params, i_pll)
    _, omega_t = gfl_pll_speed(state, params, v_pll.imag)
    front = m * params.v_dc0 / (params.z_f * i_pll)
    chi = front * (m_rate / params.omega_b - eta.rho
                   + 1j * (a_rate / params.omega_b + omega_t - eta.omega))
    return ComplexFrequency(float(chi.real), float(chi.imag))


def gfl_init(params: GflParams, v_net: complex):
    """PLL-locked steady state: returns the 6-state vector."""
    theta = float(np.angle(v_net))
    v = abs(v_net)
    m = ((1.0 + params.z_f * params.y_f) * v
         + params.z_f * params.i_ref) / params.v_dc0
    return np.array([m.real, m.imag, params.i_dref, params.i_qref, 0.0, theta])


@dataclass(frozen=True)
class GfmParams:
    """Grid-forming converter constants (droop + integral voltage control)."""

    K_p: float
    K_i: float
    T_v: float
    m_p: float
    p_ref: float
    v_ref: float
    z_t: complex
    omega_b: float
    T_p: float | None = None  # power-measurement lag; defaults to T_v

    def __post_init__(self):
        if abs(self.z_t) == 0.0:
            raise ParamDomain("coupling impedance must be nonzero")
        if self.T_v <= 0.0:
            raise ParamDomain("voltage-measurement time constant must be positive")
        if self.T_p is None:
            object.__setattr__(self, "T_p", self.T_v)


def gfm_emf(state, params: GfmParams) -> complex:
    return state[0] * np.exp(1j * state[1])


def gfm_speed(state, params: GfmParams):
    """Droop speed omega_gfm in pu."""
    return params.m_p * (params.p_ref - state[3]) + 1.0


def gfm_injection(state, params: GfmParams, v_net: complex) -> complex:
    return (gfm_emf(state, params) - v_net) / params.z_t


def gfm_derivatives(state, params: GfmParams, v_net: complex, i_net: complex):
    """Time derivatives of (e, delta, v_m, p_m), 1/s."""
    e, _, v_m, p_m = state
    v = abs(v_net)
    p = (v_net * np.conj(i_net)).real
    de = params.K_i * (params.v_ref - v_m) - (params.K_p / params.T_v) * (v_m - v)
    ddelta = params.omega_b * (gfm_speed(state, params) - 1.0)
    dv_m = (v - v_m) / params.T_v
    dp_m = (p - p_m) / params.T_p
    return np.array([de, ddelta, dv_m, dp_m])


def gfm_xi_terms(state, params: GfmParams, v_net: complex, i_net: complex) -> XiTerms:
    if abs(i_net) < MIN_MAG:
        raise CurrentTooSmall(f"|i|={abs(i_net):.3e} below MIN_MAG")
    e_bar = gfm_emf(state, params)
    de = gfm_derivatives(state, params, v_net, i_net)[0]
    front = e_bar / (params.z_t * i_net)
    omega_g = gfm_speed(state, params)
    xi_a = front * (de / state[0] / params.omega_b + 1j * omega_g)
    k_rho = 1.0 - front
    k_omega = 1j * (1.0 - front)
    return XiTerms(complex(xi_a), complex(k_rho), complex(k_omega))


def gfm_chi(state, params: GfmParams, v_net: complex, i_net: complex,
            eta: ComplexFrequency) -> ComplexFrequency:
    """Boxed closed-form chi for the GFM converter."""
    if abs(i_net) < MIN_MAG:
        raise CurrentTooSmall(f"|i|={abs(i_net):.3e} below MIN_MAG")
    e_bar = gfm_emf(state, params)
    de = gfm_derivatives(state, params, v_net, i_net)[0]
    front = e_bar / (params.z_t * i_net)
    omega_g = gfm_speed(state, params)
    chi = front * (de / state[0] / params.omega_b - eta.rho
                   + 1j * (omega_g - eta.omega))
    return ComplexFrequency(float(chi.real), float(chi.imag))


def gfm_init(params: GfmParams, v_net: complex, s_inj: complex):
    """Steady state injecting s_inj at v_net; requires |v|=v_ref, p=p_ref."""
    i_net = np.conj(s_inj / v_net)
    e_bar = v_net + params.z_t * i_net
    return np.array([abs(e_bar), float(np.angle(e_bar)),
                     abs(v_net), float(s_inj.real)])
