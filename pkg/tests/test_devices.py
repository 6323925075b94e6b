"""Device models: equilibria, CF terms, closed-form chi and degenerations."""

import numpy as np
import pytest

from synchrolens.cf import ComplexFrequency, ParkVector, chi_from_xi_terms
from synchrolens.devices import (DeviceKind, GflParams, GfmParams, ImParams,
                                 ZipParams, device_init, gfl_chi,
                                 gfl_derivatives, gfl_init, gfl_injection,
                                 gfl_xi_terms, gfm_chi, gfm_derivatives,
                                 gfm_init, gfm_injection, gfm_xi_terms,
                                 im_admittance, im_chi, im_derivatives,
                                 im_init, im_pullout, im_torque, sm2_chi,
                                 sm2_params, sm4_params, sm6_params,
                                 sm_chi_direct, sm_chi_from_terms,
                                 sm_derivatives, sm_init, sm_injection,
                                 sm_xi_terms, zip_chi, zip_current,
                                 zip_power)
from synchrolens.errors import (CurrentTooSmall, InitInfeasible,
                                MixedZipUnsupportedAnalytic, ParamDomain,
                                SlipSingular, VoltageTooSmall)

OMEGA_B = 2.0 * np.pi * 60.0
ETA_SYNC = ComplexFrequency(0.0, 1.0)


def sm6():
    return sm6_params(R_s=0.0025, x_d=1.8, x_q=1.7, x1_d=0.3, x1_q=0.55,
                      x2_d=0.25, x2_q=0.25, x_l=0.2, T1_d0=8.0, T1_q0=0.4,
                      T2_d0=0.03, T2_q0=0.05, M=13.0, D=2.0, omega_b=OMEGA_B)


def sm4():
    return sm4_params(R_s=0.0025, x_d=1.8, x_q=1.7, x1_d=0.3, x1_q=0.55,
                      x_l=0.2, T1_d0=8.0, T1_q0=0.4, M=13.0, D=2.0,
                      omega_b=OMEGA_B)


# --- synchronous machines ---------------------------------------------------


@pytest.mark.parametrize("params", [sm6(), sm4()], ids=["sm6", "sm4"])
def test_machine_equilibrium_init(params):
    v = 1.02 * np.exp(0.2j)
    s = 0.8 + 0.2j
    state, tau_m, v_f = sm_init(params, v, s)
    deriv = sm_derivatives(state, params, v, tau_m, v_f)
    assert np.max(np.abs(deriv)) < 1e-9
    assert abs(sm_injection(state, params, v) - np.conj(s / v)) < 1e-12
    chi = sm_chi_from_terms(state, params, v, np.conj(s / v), ETA_SYNC, v_f=v_f)
    assert abs(chi.to_complex()) < 1e-12


def test_no_load_angle_is_voltage_angle():
    params = sm2_params(x1_d=0.3, M=7.0, D=0.0, omega_b=OMEGA_B)
    state, tau_m, e_q0 = sm_init(params, 1.0 + 0.0j, 0.0j)
    assert state[0] == pytest.approx(0.0, abs=1e-12)
    assert state[1] == 1.0
    assert tau_m == pytest.approx(0.0, abs=1e-12)
    assert e_q0 == pytest.approx(1.0)


def test_torque_step_accelerates_by_swing_equation():
    params = sm4()
    v = 1.0 + 0.0j
    state, tau_m, v_f = sm_init(params, v, 0.7 + 0.1j)
    deriv = sm_derivatives(state, params, v, 1.1 * tau_m, v_f)
    assert deriv[1] == pytest.approx(0.1 * tau_m / params.M, rel=1e-9)


def test_reactance_ordering_rejected():
    with pytest.raises(ParamDomain):
        sm6_params(R_s=0.0, x_d=0.2, x_q=1.7, x1_d=0.3, x1_q=0.55, x2_d=0.25,
                   x2_q=0.25, x_l=0.2, T1_d0=8.0, T1_q0=0.4, T2_d0=0.03,
                   T2_q0=0.05, M=13.0, D=0.0, omega_b=OMEGA_B)


def test_xi_terms_reject_small_current():
    params = sm4()
    state, _, v_f = sm_init(params, 1.0 + 0.0j, 0.5 + 0.1j)
    with pytest.raises(CurrentTooSmall):
        sm_xi_terms(state, params, 1.0 + 0.0j, 1e-9j, v_f=v_f)


def test_sm6_composition_equals_direct_form():
    """Eq-(6)-style composition vs the boxed grouping, 20 random states."""
    params = sm6()
    v = 1.02 * np.exp(0.2j)
    state0, _, v_f = sm_init(params, v, 0.8 + 0.2j)
    rng = np.random.default_rng(7)
    for _ in range(20):
        state = state0 + rng.normal(0.0, 0.05, len(state0))
        i_net = sm_injection(state, params, v)
        eta = ComplexFrequency(rng.normal(0.0, 0.03), 1.0 + rng.normal(0.0, 0.03))
        composed = sm_chi_from_terms(state, params, v, i_net, eta, v_f=v_f)
        direct = sm_chi_direct(state, params, v, i_net, eta, v_f=v_f)
        assert abs(composed.to_complex() - direct.to_complex()) < 1e-12


def test_sm2_chi_frozen_independent_value():
    # chi = (-j*s/(x'*i^2) + 1)*(-rho + j(w_r - w)) evaluated by plain
    # complex arithmetic: s = 0.8+0.2j, x' = 0.3, i = 1, rho = 0, w_r - w = 0.01
    expected = (-1j * (0.8 + 0.2j) / 0.3 + 1.0) * (1j * 0.01)
    params = sm2_params(x1_d=0.3, M=7.0, D=0.0, omega_b=OMEGA_B)
    state = np.array([0.0, 1.01])
    chi = sm2_chi(state, params, 0.8 + 0.2j, 1.0, ComplexFrequency(0.0, 1.0))
    assert chi.to_complex() == pytest.approx(expected, abs=1e-15)
    assert chi.rho == pytest.approx(0.8 / 30.0)
    assert chi.omega == pytest.approx(0.5 / 30.0)


def test_sm2_chi_als_fixed_point():
    params = sm2_params(x1_d=0.3, M=7.0, D=0.0, omega_b=OMEGA_B)
    chi = sm2_chi(np.array([0.1, 1.0]), params, 0.9 + 0.3j, 1.1,
                  ComplexFrequency(0.0, 1.0))
    assert chi.to_complex() == 0.0


def test_machine_convention_twin_invariance():
    """The load-convention twin (delta + pi, flipped EMF states) leaves chi
    unchanged, which is what sign-convention independence means here."""
    params = sm6()
    v = 1.01 * np.exp(0.15j)
    state, _, v_f = sm_init(params, v, 0.7 + 0.25j)
    rng = np.random.default_rng(3)
    for _ in range(10):
        st = state + rng.normal(0.0, 0.04, 6)
        i_net = sm_injection(st, params, v)
        eta = ComplexFrequency(rng.normal(0.0, 0.02), 1.0 + rng.normal(0.0, 0.02))
        twin = st.copy()
        twin[0] += np.pi
        twin[2:] = -twin[2:]
        a = sm_chi_direct(st, params, v, i_net, eta, v_f=v_f)
        b = sm_chi_direct(twin, params, v, i_net, eta, v_f=-v_f)
        assert abs(a.to_complex() - b.to_complex()) < 1e-12
        assert abs(sm_injection(twin, params, v) - i_net) < 1e-12


def _sm6_on_manifold(params, rng, v, v_f):
    """Random SM6 state with the subtransient fluxes on their T''->0 manifold."""
    state0, _, _ = sm_init(params, v, 0.8 + 0.2j)
    state = state0 + rng.normal(0.0, 0.05, 6)
    from synchrolens.devices import sm_currents
    for _ in range(50):  # fixed-point: psi'' depends on the stator currents
        i_m = sm_currents(state, params, v)
        psi2_d = state[5] - (params.x1_d - params.x_l) * i_m.real
        psi2_q = -state[4] - (params.x1_q - params.x_l) * i_m.imag
        if abs(psi2_d - state[2]) + abs(psi2_q - state[3]) < 1e-14:
            break
        state[2], state[3] = psi2_d, psi2_q
    return state


def test_reduction_sm6_to_sm4_100_states():
    p6 = sm6_params(R_s=0.0025, x_d=1.8, x_q=1.7, x1_d=0.3, x1_q=0.55,
                    x2_d=0.3, x2_q=0.55, x_l=0.2, T1_d0=8.0, T1_q0=0.4,
                    T2_d0=0.01, T2_q0=0.01, M=13.0, D=2.0, omega_b=OMEGA_B)
    p4 = sm4()
    v = 1.02 * np.exp(0.2j)
    _, _, v_f = sm_init(p4, v, 0.8 + 0.2j)
    rng = np.random.default_rng(11)
    for _ in range(100):
        s6 = _sm6_on_manifold(p6, rng, v, v_f)
        s4 = np.array([s6[0], s6[1], s6[4], s6[5]])
        i_net = sm_injection(s6, p6, v)
        assert abs(i_net - sm_injection(s4, p4, v)) < 1e-12
        eta = ComplexFrequency(rng.normal(0.0, 0.02), 1.0 + rng.normal(0.0, 0.02))
        t6 = sm_xi_terms(s6, p6, v, i_net, v_f=v_f)
        t4 = sm_xi_terms(s4, p4, v, i_net, v_f=v_f)
        assert abs(t6.xi_a - t4.xi_a) < 1e-12
        assert abs(t6.k_rho - t4.k_rho) < 1e-12
        assert abs(t6.k_omega - t4.k_omega) < 1e-12
        chi6 = sm_chi_direct(s6, p6, v, i_net, eta, v_f=v_f)
        chi4 = sm_chi_direct(s4, p4, v, i_net, eta, v_f=v_f)
        assert abs(chi6.to_complex() - chi4.to_complex()) < 1e-12


def test_reduction_sm4_to_sm2_100_states():
    p4 = sm4_params(R_s=0.0, x_d=0.3, x_q=0.3, x1_d=0.3, x1_q=0.3, x_l=0.15,
                    T1_d0=8.0, T1_q0=0.4, M=7.0, D=0.0, omega_b=OMEGA_B)
    v = 1.0 * np.exp(0.1j)
    rng = np.random.default_rng(13)
    for _ in range(100):
        delta = rng.normal(0.3, 0.3)
        omega_r = 1.0 + rng.normal(0.0, 0.01)
        e_q = abs(rng.normal(1.05, 0.1)) + 0.2
        s4 = np.array([delta, omega_r, 0.0, e_q])   # e'_d = 0 on the manifold
        p2 = sm2_params(x1_d=0.3, M=7.0, D=0.0, omega_b=OMEGA_B, x_l=0.15,
                        e_q0=e_q)
        s2 = np.array([delta, omega_r])
        i_net = sm_injection(s4, p4, v)
        assert abs(i_net - sm_injection(s2, p2, v)) < 1e-12
        if abs(i_net) < 1e-3:
            continue
        eta = ComplexFrequency(rng.normal(0.0, 0.02), 1.0 + rng.normal(0.0, 0.02))
        # v_f chosen so e'_q is stationary: the classical model's constant EMF
        v_m = 1j * np.exp(-1j * delta) * v
        i_m = 1j * np.exp(-1j * delta) * i_net
        v_f = e_q + (p4.x_d - p4.x1_d) * i_m.real
        chi4 = sm_chi_direct(s4, p4, v, i_net, eta, v_f=v_f)
        s_mach = v_m * np.conj(i_m)
        chi2 = sm2_chi(s2, p2, complex(s_mach), abs(i_m), eta)
        assert abs(chi4.to_complex() - chi2.to_complex()) < 1e-12


# --- ZIP loads ---------------------------------------------------------------


def test_zip_shares_must_sum_to_one():
    with pytest.raises(ParamDomain):
        ZipParams(p0=1.0, q0=0.0, k_pp=0.5, k_ip=0.0, k_zp=0.4)


def test_zip_current_pure_z_unit_voltage():
    params = ZipParams(p0=0.5, q0=0.1)
    inj = zip_current(ParkVector(1.0, 0.0), params)
    # current into the load is the negative of the injection
    assert -inj.to_complex() == pytest.approx(0.5 - 0.1j, abs=1e-15)


def test_zip_current_pure_p_scales_inverse_voltage():
    params = ZipParams(p0=0.5, q0=0.1, k_zp=0.0, k_pp=1.0, k_zq=0.0, k_pq=1.0)
    i_1 = zip_current(ParkVector(1.0, 0.0), params).to_complex()
    i_09 = zip_current(ParkVector(0.9, 0.0), params).to_complex()
    assert i_09 == pytest.approx(i_1 / 0.9, abs=1e-15)


def test_zip_current_mixed_matches_polynomials():
    params = ZipParams(p0=0.6, q0=0.2, k_pp=0.2, k_ip=0.3, k_zp=0.5,
                       k_pq=0.1, k_iq=0.4, k_zq=0.5)
    v = ParkVector(0.95 * np.cos(np.deg2rad(10)), 0.95 * np.sin(np.deg2rad(10)))
    vm = v.magnitude()
    p = 0.6 * (0.2 + 0.3 * vm + 0.5 * vm ** 2)
    q = 0.2 * (0.1 + 0.4 * vm + 0.5 * vm ** 2)
    expected = -np.conj(complex(p, q) / v.to_complex())
    assert zip_current(v, params).to_complex() == pytest.approx(expected, abs=1e-15)
    assert zip_power(params, vm) == pytest.approx((p, q))


def test_zip_current_rejects_small_voltage():
    with pytest.raises(VoltageTooSmall):
        zip_current(ParkVector(1e-9, 0.0), ZipParams(p0=1.0, q0=0.0))


def test_zip_chi_boxed_values():
    eta = ComplexFrequency(0.07, 0.96)
    z = zip_chi(ZipParams(p0=1.0, q0=0.1), eta)
    assert (z.rho, z.omega) == (0.0, 0.0)
    i = zip_chi(ZipParams(p0=1.0, q0=0.1, k_zp=0.0, k_ip=1.0, k_zq=0.0,
                          k_iq=1.0), eta)
    assert (i.rho, i.omega) == pytest.approx((-0.07, 0.0))
    p = zip_chi(ZipParams(p0=1.0, q0=0.1, k_zp=0.0, k_pp=1.0, k_zq=0.0,
                          k_pq=1.0), eta)
    assert (p.rho, p.omega) == pytest.approx((-0.14, 0.0))
    with pytest.raises(MixedZipUnsupportedAnalytic):
        zip_chi(ZipParams(p0=1.0, q0=0.0, k_zp=0.5, k_ip=0.5), eta)


# --- induction motor ---------------------------------------------------------


def motor():
    return ImParams(r_S=0.01, x_S=0.1, r_R1=0.02, x_R1=0.18, x_mu=3.0,
                    H_m=0.6, omega_b=OMEGA_B)


def test_im_equilibrium_and_voltage_square_law():
    params = motor()
    sigma = im_init(params, 1.0, 0.9)
    assert im_derivatives(sigma, params, 1.0, 0.9) == pytest.approx(0.0, abs=1e-10)
    tau_low = im_torque(params, sigma, 0.8)
    assert tau_low == pytest.approx(0.64 * 0.9, rel=1e-12)
    assert im_derivatives(sigma, params, 0.8, 0.9) > 0.0


def test_im_init_bisection_against_independent_root():
    params = motor()
    tau_m = 0.85
    sigma = im_init(params, 1.0, tau_m)
    # independent oracle: dense scan + local refinement on the stable branch
    grid = np.linspace(1e-6, im_pullout(params, 1.0)[0], 20001)
    torques = np.array([im_torque(params, s, 1.0) for s in grid])
    k = int(np.argmin(np.abs(torques - tau_m)))
    assert abs(sigma - grid[k]) < 2 * (grid[1] - grid[0])
    assert im_torque(params, sigma, 1.0) == pytest.approx(tau_m, abs=1e-10)


def test_im_init_above_pullout_infeasible():
    with pytest.raises(InitInfeasible):
        im_init(motor(), 1.0, 1.2 * im_pullout(motor(), 1.0)[1])


def test_im_chi_zero_at_torque_balance():
    chi = im_chi(0.02, motor(), 0.0)
    assert (chi.rho, chi.omega) == (0.0, 0.0)


def test_im_chi_matches_admittance_derivative_oracle():
    """Boxed grouping vs d/dt ln(y) of the equivalent admittance."""
    params = motor()
    rng = np.random.default_rng(5)
    for _ in range(25):
        sigma = rng.uniform(0.005, 0.3)
        sigma_dot = rng.normal(0.0, 0.2)
        chi = im_chi(sigma, params, sigma_dot).to_complex()
        r = params.r_S + params.r_R1 / sigma
        r_dot = -(params.r_R1 / sigma ** 2) * sigma_dot
        # y = 1/(j*x_mu) + 1/(r + jx); dy/dt = -r_dot/(r+jx)^2
        y = im_admittance(params, sigma)
        dy = -r_dot / (r + 1j * params.x) ** 2
        assert chi == pytest.approx(dy / y / OMEGA_B, abs=1e-15)


def test_im_zero_slip_singular():
    with pytest.raises(SlipSingular):
        im_torque(motor(), 0.0, 1.0)


# --- converters --------------------------------------------------------------


def gfl():
    return GflParams(K_p=0.2, K_i=16.0, T_m=0.002, K_p_pll=0.5, K_i_pll=20.0,
                     v_dc0=2.0, z_f=0.005 + 0.15j, y_f=0.05j, i_dref=0.5,
                     i_qref=0.05, omega_b=OMEGA_B)


def test_gfl_locked_equilibrium():
    params = gfl()
    v = 1.01 * np.exp(0.2j)
    state = gfl_init(params, v)
    assert np.max(np.abs(gfl_derivatives(state, params, v))) < 1e-12
    i_net = gfl_injection(state, params, v)
    chi = gfl_chi(state, params, v, i_net, ETA_SYNC)
    assert abs(chi.to_complex()) < 1e-12


def test_gfl_pll_correction_sign():
    params = gfl()
    v = 1.0 * np.exp(0.05j)          # positive v_q in the PLL frame
    state = gfl_init(params, 1.0 + 0.0j)
    deriv = gfl_derivatives(state, params, v)
    assert deriv[4] > 0.0 and deriv[5] > 0.0


def test_gfl_terms_compose_to_boxed_chi():
    params = gfl()
    v = 1.0 + 0.0j
    state0 = gfl_init(params, v)
    rng = np.random.default_rng(9)
    for _ in range(20):
        state = state0 + rng.normal(0.0, 0.03, 6)
        i_net = gfl_injection(state, params, v)
        eta = ComplexFrequency(rng.normal(0.0, 0.02), 1.0 + rng.normal(0.0, 0.02))
        terms = gfl_xi_terms(state, params, v, i_net)
        composed = chi_from_xi_terms(terms.xi_a, terms.k_rho, terms.k_omega, eta)
        direct = gfl_chi(state, params, v, i_net, eta)
        assert abs(composed.to_complex() - direct.to_complex()) < 1e-12


def gfm():
    return GfmParams(K_p=1.0, K_i=8.0, T_v=0.02, m_p=0.04, p_ref=0.5,
                     v_ref=1.0, z_t=0.01 + 0.2j, omega_b=OMEGA_B)


def test_gfm_equilibrium_and_droop_sign():
    params = gfm()
    v = 1.0 * np.exp(0.1j)
    state = gfm_init(params, v, 0.5 + 0.1j)
    i_net = gfm_injection(state, params, v)
    assert abs(i_net - np.conj((0.5 + 0.1j) / v)) < 1e-12
    assert np.max(np.abs(gfm_derivatives(state, params, v, i_net))) < 1e-12
    chi = gfm_chi(state, params, v, i_net, ETA_SYNC)
    assert abs(chi.to_complex()) < 1e-12
    low_pm = state.copy()
    low_pm[3] = 0.4   # measured power below reference -> speeds up
    assert gfm_derivatives(low_pm, params, v, i_net)[1] > 0.0


def test_gfm_terms_compose_to_boxed_chi():
    params = gfm()
    v = 1.0 + 0.0j
    state0 = gfm_init(params, v, 0.5 + 0.1j)
    rng = np.random.default_rng(17)
    for _ in range(20):
        state = state0 + rng.normal(0.0, 0.03, 4)
        i_net = gfm_injection(state, params, v)
        eta = ComplexFrequency(rng.normal(0.0, 0.02), 1.0 + rng.normal(0.0, 0.02))
        terms = gfm_xi_terms(state, params, v, i_net)
        composed = chi_from_xi_terms(terms.xi_a, terms.k_rho, terms.k_omega, eta)
        direct = gfm_chi(state, params, v, i_net, eta)
        assert abs(composed.to_complex() - direct.to_complex()) < 1e-12


def test_device_init_dispatch():
    state, inputs = device_init(DeviceKind.SM2,
                                sm2_params(x1_d=0.3, M=7.0, D=0.0,
                                           omega_b=OMEGA_B),
                                1.0 + 0.0j, 0.0j)
    assert state[0] == pytest.approx(0.0, abs=1e-12)
    assert inputs["e_q0"] == pytest.approx(1.0)
    with pytest.raises(InitInfeasible):
        device_init(DeviceKind.INDUCTION_MOTOR, motor(), 1.0 + 0.0j, 0.5 + 0.0j)
