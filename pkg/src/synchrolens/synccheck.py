"""Numeric admittance-CF extraction, BLS/ALS verdicts and cross-checks.

The two synchronization criteria are finite-horizon operationalizations: BLS
passes when the supremum of ||chi|| beyond the settling window stays below
epsilon; ALS passes when the tail maximum is below the tail tolerance and
the log-envelope slope over the tail is non-positive.  Samples around
discrete events or with near-zero magnitudes are masked, never interpolated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cf import MIN_MAG, cf_arrays
from .errors import AxisMismatch, WindowTooShort
from .sim import SimResult, build_adapters

EVENT_MASK_HALF_WIDTH = 2
DEFAULT_EPSILON = 1e-4
DEFAULT_TAIL_TOL = 1e-4
DEFAULT_SETTLE = 2.0
DEFAULT_TAIL_WINDOW = 3.0

# ||chi|| floor below which the envelope slope is treated as settled
_SLOPE_FLOOR = 1e-12


@dataclass(frozen=True)
class ChiSeries:
    """Per-sample complex chi with a validity mask on a shared time axis."""

    t: np.ndarray
    values: np.ndarray
    mask: np.ndarray        # True where the sample is usable

    def norm(self):
        return np.abs(self.values)

    def masked_norm(self):
        return np.abs(self.values[self.mask])


@dataclass(frozen=True)
class BlsCheck:
    passed: bool
    epsilon: float
    sup_norm: float
    window: tuple


@dataclass(frozen=True)
class AlsCheck:
    passed: bool
    tail_tol: float
    tail_max: float
    slope: float
    window: tuple


@dataclass(frozen=True)
class SyncVerdict:
    device: str
    bls: BlsCheck
    als: AlsCheck
    chi_at_t0: float
    notes: str = ""


@dataclass(frozen=True)
class ChiCrossCheck:
    device: str
    rms: float
    max: float
    worst_time: float
    n_samples: int
    rms_tol: float = 1e-3
    max_tol: float = 1e-2

    @property
    def passed(self):
        return self.rms <= self.rms_tol and self.max <= self.max_tol


def event_mask(n_samples, event_samples, half_width=EVENT_MASK_HALF_WIDTH):
    """Validity mask excluding +-half_width samples around each event."""
    mask = np.ones(n_samples, dtype=bool)
    for s in event_samples:
        mask[max(0, s - half_width):min(n_samples, s + half_width + 1)] = False
    return mask


def _cf_with_mask(values, valid, dt, omega_b, frame_omega=1.0):
    """CF arrays tolerant of invalid samples; differentiation across an
    invalid neighbour invalidates the sample (mask dilation by one)."""
    safe = np.where(np.abs(values) >= MIN_MAG, values, 1.0 + 0.0j)
    rho, omega = cf_arrays(safe, dt, frame_omega, omega_b)
    ok = valid.copy()
    ok[1:] &= valid[:-1]
    ok[:-1] &= valid[1:]
    return rho, omega, ok


def numeric_chi(result: SimResult, device_id: str) -> ChiSeries:
    """chi = CF(injected current) - CF(bus voltage) on the recorded grid.

    Low-magnitude regions, inactive-device spans and +-2 samples around each
    event are masked rather than reported as failures.
    """
    bus = result.device_bus[device_id]
    v = result.voltages[bus]
    i = result.currents[device_id]
    valid = ((np.abs(v) >= MIN_MAG) & (np.abs(i) >= MIN_MAG)
             & result.active[device_id])
    rho_v, om_v, ok_v = _cf_with_mask(v, valid, result.dt, result.omega_b,
                                      result.frame_omega)
    rho_i, om_i, ok_i = _cf_with_mask(i, valid, result.dt, result.omega_b,
                                      result.frame_omega)
    chi = (rho_i - rho_v) + 1j * (om_i - om_v)
    mask = ok_v & ok_i & event_mask(len(v), result.event_samples)
    return ChiSeries(result.t, chi, mask)


def voltage_cf(result: SimResult, bus_id: str):
    """(rho, omega, valid) of a bus voltage, masked like numeric_chi."""
    v = result.voltages[bus_id]
    valid = np.abs(v) >= MIN_MAG
    rho, omega, ok = _cf_with_mask(v, valid, result.dt, result.omega_b,
                                   result.frame_omega)
    return rho, omega, ok & event_mask(len(v), result.event_samples)


def rotate_result(result: SimResult, delta_omega: float) -> SimResult:
    """Every recorded Park-vector series re-expressed in a faster frame."""
    from dataclasses import replace
    phase = np.exp(-1j * delta_omega * result.omega_b * result.t)
    return replace(
        result,
        voltages={b: v * phase for b, v in result.voltages.items()},
        currents={d: i * phase for d, i in result.currents.items()},
        frame_omega=result.frame_omega + delta_omega,
    )


def analytic_chi(result: SimResult, scenario, device_id: str) -> ChiSeries | None:
    """Closed-form chi series for one device, None if the model has none.

    Device inputs (tau_m, field voltage, references) are re-derived from the
    t=0 operating point, which run_simulation guarantees is an equilibrium.
    """
    series = analytic_chi_all(result, scenario, only=device_id)
    return series.get(device_id)


def analytic_chi_all(result: SimResult, scenario, only=None):
    """Closed-form chi for every device that has one: dict id -> ChiSeries."""
    adapters = {a.id: a for a in build_adapters(scenario)}
    out = {}
    eta_cache = {}
    for dev_id, a in adapters.items():
        if only is not None and dev_id != only:
            continue
        bus = result.device_bus[dev_id]
        v = result.voltages[bus]
        i = result.currents[dev_id]
        if a.n_states:
            s0 = v[0] * np.conj(i[0])
            a.init(complex(v[0]), complex(s0))
            states = result.states[dev_id]
        else:
            states = None
        if bus not in eta_cache:
            eta_cache[bus] = voltage_cf(result, bus)
        rho_v, om_v, ok_v = eta_cache[bus]
        valid = (ok_v & (np.abs(i) >= MIN_MAG) & result.active[dev_id]
                 & event_mask(len(v), result.event_samples))
        chi = _chi_series_vectorized(a, states, v, i, rho_v, om_v, valid)
        if chi is not None:
            out[dev_id] = ChiSeries(result.t, chi, valid)
    return out


def _chi_series_vectorized(adapter, states, v, i, rho, om, valid):
    """Closed-form chi over sample arrays; None when the device has none.

    The recorded injection already equals the device's own stator/filter
    solve, so machine-frame components come straight from the records.
    """
    from .sim import (DcSourceAdapter, GflAdapter, GfmAdapter, MotorAdapter,
                      SmAdapter, ZipAdapter)

    n = len(v)
    if isinstance(adapter, ZipAdapter):
        kind = adapter.zp.pure_kind()
        if kind is None:
            return None
        factor = {"z": 0.0, "i": -1.0, "p": -2.0}[kind]
        return factor * rho + 0.0j

    if isinstance(adapter, DcSourceAdapter):
        return -(rho + 1j * om)

    if isinstance(adapter, MotorAdapter):
        p = adapter.imp
        sigma = states[:, 0]
        r = p.r_S + p.r_R1 / np.where(sigma == 0.0, np.inf, sigma)
        tau_e = (p.r_R1 / sigma) * np.abs(v) ** 2 / (r ** 2 + p.x ** 2)
        sigma_dot = (adapter.tau_m - tau_e) / (2.0 * p.H_m)
        r_dot = -(p.r_R1 / sigma ** 2) * sigma_dot
        z2 = r ** 2 + p.x ** 2
        bracket = (r ** 2 * (p.x_t ** 2 - p.x ** 2)
                   + 1j * r * p.x_mu * (r ** 2 - p.x ** 2 - p.x_mu * p.x)) \
            / (z2 * (r ** 2 + p.x_t ** 2))
        return -(r_dot / r) * bracket / p.omega_b

    if isinstance(adapter, SmAdapter):
        mp = adapter.mp
        core = states[:, :mp.n_states]
        delta, omega_r = core[:, 0], core[:, 1]
        rot = 1j * np.exp(-1j * delta)
        v_m = rot * v
        i_m = rot * (i / adapter.ratio)
        i2 = np.maximum(np.abs(i_m) ** 2, MIN_MAG ** 2)
        v_d, v_q = v_m.real, v_m.imag
        i_d, i_q = i_m.real, i_m.imag
        zdc = mp.R_s - 1j * mp.x2_d
        zqc = mp.R_s - 1j * mp.x2_q
        det = mp.x2_d * mp.x2_q + mp.R_s ** 2
        b = np.conj(i_m) / (det * i2)
        if mp.order == 2:
            s = v_m * np.conj(i_m)
            factor = -1j * s / (mp.x1_d * i2) + 1.0
            return factor * (-rho + 1j * (omega_r - om))
        if adapter.avr:
            v_f = (adapter.v_f0 + adapter.avr_kp * (adapter.v_ref - np.abs(v))
                   + states[:, -1])
        else:
            v_f = np.full(n, adapter.v_f0)
        if mp.order == 6:
            psi2_d, psi2_q = core[:, 2], core[:, 3]
            e1_d, e1_q = core[:, 4], core[:, 5]
            dpsi2_d = (-psi2_d + e1_q - (mp.x1_d - mp.x_l) * i_d) / mp.T2_d0
            dpsi2_q = (-psi2_q - e1_d - (mp.x1_q - mp.x_l) * i_q) / mp.T2_q0
            de1_d = ((mp.x_q - mp.x1_q)
                     * (mp.gamma_q1 * i_q - mp.gamma_q2 * (psi2_q + e1_d))
                     - e1_d) / mp.T1_q0
            de1_q = (v_f - (mp.x_d - mp.x1_d)
                     * (mp.gamma_d1 * i_d - mp.gamma_d2 * (psi2_d - e1_q))
                     - e1_q) / mp.T1_d0
            dE_d = mp.gamma_d1 * de1_q + (1.0 - mp.gamma_d1) * dpsi2_d
            dE_q = -mp.gamma_q1 * de1_d + (1.0 - mp.gamma_q1) * dpsi2_q
        else:
            e1_d, e1_q = core[:, 2], core[:, 3]
            de1_d = ((mp.x_q - mp.x1_q) * i_q - e1_d) / mp.T1_q0
            de1_q = (v_f - (mp.x_d - mp.x1_d) * i_d - e1_q) / mp.T1_d0
            dE_d, dE_q = de1_q, -de1_d
        t_omega = b * (zdc * v_q - 1j * zqc * v_d)
        k_rho = -b * (zdc * v_d + 1j * zqc * v_q)
        deriv_term = b * (1j * zqc * dE_d - zdc * dE_q) / mp.omega_b
        return ((omega_r - om) * (1j - t_omega) - rho * (1.0 - k_rho)
                + deriv_term)

    if isinstance(adapter, GflAdapter):
        gp = adapter.gp
        rot = np.exp(-1j * states[:, 5])
        v_pll = v * rot
        i_pll = (i / adapter.ratio) * rot
        i_safe = np.where(np.abs(i_pll) < MIN_MAG, MIN_MAG, i_pll)
        m = (states[:, 0] + 1j * states[:, 1]
             + gp.K_p * (gp.i_ref - (states[:, 2] + 1j * states[:, 3])))
        m2 = np.maximum(np.abs(m) ** 2, MIN_MAG ** 2)
        dm_d = (gp.K_i * (gp.i_dref - states[:, 2])
                - (gp.K_p / gp.T_m) * (i_pll.real - states[:, 2]))
        dm_q = (gp.K_i * (gp.i_qref - states[:, 3])
                - (gp.K_p / gp.T_m) * (i_pll.imag - states[:, 3]))
        m_rate = (m.real * dm_d + m.imag * dm_q) / m2
        a_rate = (m.real * dm_q - m.imag * dm_d) / m2
        omega_t = gp.K_p_pll * v_pll.imag + states[:, 4] + gp.omega_ref
        front = m * gp.v_dc0 / (gp.z_f * i_safe)
        return front * (m_rate / gp.omega_b - rho
                        + 1j * (a_rate / gp.omega_b + omega_t - om))

    if isinstance(adapter, GfmAdapter):
        gp = adapter.gp
        e = states[:, 0]
        e_bar = e * np.exp(1j * states[:, 1])
        v_m_state, p_m = states[:, 2], states[:, 3]
        i_dev = i / adapter.ratio
        i_safe = np.where(np.abs(i_dev) < MIN_MAG, MIN_MAG, i_dev)
        de = (gp.K_i * (gp.v_ref - v_m_state)
              - (gp.K_p / gp.T_v) * (v_m_state - np.abs(v)))
        omega_g = gp.m_p * (gp.p_ref - p_m) + 1.0
        front = e_bar / (gp.z_t * i_safe)
        return front * (de / np.maximum(e, MIN_MAG) / gp.omega_b - rho
                        + 1j * (omega_g - om))

    return None


def check_bls(chi: ChiSeries, t0: float, epsilon: float,
              settle: float = DEFAULT_SETTLE) -> BlsCheck:
    """Pass iff sup of ||chi|| over t > t0 + settle stays below epsilon."""
    start = t0 + settle
    t_end = float(chi.t[-1])
    if t_end - start < 1.0:
        raise WindowTooShort(
            f"bls window ({start:.2f}, {t_end:.2f}) shorter than 1 s")
    sel = (chi.t > start) & chi.mask
    if not sel.any():
        raise WindowTooShort("bls window has no unmasked samples")
    sup = float(np.abs(chi.values[sel]).max())
    return BlsCheck(sup < epsilon, epsilon, sup, (start, t_end))


def _envelope_slope(t, norm, n_bins=8):
    """Least-squares slope of log10 sub-window maxima, 1/s."""
    edges = np.linspace(t[0], t[-1], n_bins + 1)
    xs, ys = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        sel = (t >= a) & (t <= b)
        if sel.any():
            peak = norm[sel].max()
            xs.append(0.5 * (a + b))
            ys.append(np.log10(max(peak, _SLOPE_FLOOR)))
    if len(xs) < 2 or max(ys) <= np.log10(_SLOPE_FLOOR) + 1.0:
        return 0.0
    coef = np.polyfit(xs, ys, 1)
    return float(coef[0])


def check_als(chi: ChiSeries, tail_tol: float = DEFAULT_TAIL_TOL,
              tail_window: float = DEFAULT_TAIL_WINDOW) -> AlsCheck:
    """Pass iff the final tail_window of ||chi|| stays below tail_tol and the
    log-envelope slope keeps the extrapolated envelope below tail_tol for at
    least one more window (a signal exactly at tolerance must therefore have
    a non-positive slope).  A late divergence hidden by masking also fails:
    the last unmasked sample may not exceed 10x the run median."""
    t_end = float(chi.t[-1])
    start = t_end - tail_window
    if start <= float(chi.t[0]):
        raise WindowTooShort(
            f"tail window {tail_window} s exceeds the simulated span")
    sel = (chi.t >= start) & chi.mask
    if not sel.any():
        raise WindowTooShort("als tail has no unmasked samples")
    norm_tail = np.abs(chi.values[sel])
    tail_max = float(norm_tail.max())
    slope = _envelope_slope(chi.t[sel], norm_tail)
    passed = bool(tail_max < tail_tol
                  and slope * tail_window
                  <= np.log10(tail_tol / max(tail_max, _SLOPE_FLOOR)))

    all_norm = np.abs(chi.values[chi.mask])
    if len(all_norm):
        median = float(np.median(all_norm))
        last = float(all_norm[-1])
        if median > 0.0 and last > 10.0 * median and last > tail_tol:
            passed = False
    return AlsCheck(passed, tail_tol, tail_max, slope, (start, t_end))


def crosscheck_chi(analytic: ChiSeries, numeric: ChiSeries,
                   device: str = "", rms_tol: float = 1e-3,
                   max_tol: float = 1e-2) -> ChiCrossCheck:
    """RMS and sup norm of the componentwise difference on shared valid samples."""
    if len(analytic.t) != len(numeric.t) or not np.array_equal(analytic.t, numeric.t):
        raise AxisMismatch("chi series do not share a time axis")
    both = analytic.mask & numeric.mask
    if not both.any():
        raise AxisMismatch("no commonly valid samples")
    diff = np.abs(analytic.values[both] - numeric.values[both])
    worst = int(np.argmax(diff))
    return ChiCrossCheck(device=device,
                         rms=float(np.sqrt(np.mean(diff ** 2))),
                         max=float(diff.max()),
                         worst_time=float(numeric.t[both][worst]),
                         n_samples=int(both.sum()),
                         rms_tol=rms_tol, max_tol=max_tol)


def last_event_time(result: SimResult):
    return max((t for t, _ in result.events), default=0.0)


def evaluate_device(result: SimResult, device_id: str,
                    epsilon: float = DEFAULT_EPSILON,
                    tail_tol: float = DEFAULT_TAIL_TOL,
                    settle: float = DEFAULT_SETTLE,
                    tail_window: float = DEFAULT_TAIL_WINDOW) -> SyncVerdict:
    """BLS + ALS verdict for one device from its numeric chi.

    The BLS window is anchored so it never starts before the ALS tail does;
    with that alignment an ALS pass implies a BLS pass for every epsilon at
    or above the tail tolerance.
    """
    chi = numeric_chi(result, device_id)
    t_end = float(chi.t[-1])
    bls_start = max(last_event_time(result) + settle, t_end - tail_window)
    bls = check_bls(chi, bls_start - settle, epsilon, settle)
    als = check_als(chi, tail_tol, tail_window)
    first = np.flatnonzero(chi.mask)
    chi_t0 = float(np.abs(chi.values[first[0]])) if len(first) else float("nan")
    notes = ""
    if not result.active[device_id][-1]:
        notes = "device disconnected during the run; verdict covers active span"
    return SyncVerdict(device_id, bls, als, chi_t0, notes)


def angle_spread(result: SimResult):
    """Largest drift-relative angle spread between rotating devices, rad."""
    series = []
    for dev, names in result.state_names.items():
        if "delta" in names:
            col = names.index("delta")
            series.append(result.states[dev][:, col])
    for dev, kind in result.device_kind.items():
        if kind.value == "voltage_source":
            series.append(np.zeros(len(result.t)))
    if len(series) < 2:
        return 0.0
    rel = np.stack([s - s[0] for s in series])
    spread = rel.max(axis=0) - rel.min(axis=0)
    return float(spread.max())


def system_unstable(result: SimResult, threshold=np.pi):
    """Angle-separation instability flag (spread beyond 180 degrees)."""
    return bool(angle_spread(result) > threshold)
