"""Closed-form generator for the DC-injection circuit study.

An ideal nominal-frequency source feeds a bus through an r + jx branch; a
current source injects a current that is constant in the stationary frame,
i.e. a Park vector rotating at -1 pu in the synchronous frame.  Superposing
the two single-frequency responses gives the exact bus voltage: the source
tone sees no load current, and the stationary tone sees only the branch
resistance (the inductor drops nothing at zero stationary frequency).

The circuit is linear, so the sampled waveforms are exact; no integration is
involved and the admittance CF of the current source can be cross-checked
against a symbolic oracle.
"""

from __future__ import annotations

import numpy as np

from ..devices import DeviceKind
from ..errors import ParamDomain, SchemaError
from .model import Scenario

ANALYTIC_KIND = "circuit_dc"


def circuit_elements(scenario: Scenario):
    """(EMF, I_dc, branch) extracted from a circuit_dc scenario."""
    vs = [d for d in scenario.devices if d.kind is DeviceKind.VOLTAGE_SOURCE]
    cs = [d for d in scenario.devices if d.kind is DeviceKind.DC_CURRENT_SOURCE]
    if len(vs) != 1 or len(cs) != 1 or len(scenario.branches) != 1:
        raise SchemaError("circuit_dc needs one voltage source, one DC current "
                          "source and one branch")
    branch = scenario.branches[0]
    if {branch.from_bus, branch.to_bus} != {vs[0].bus, cs[0].bus}:
        raise SchemaError("circuit_dc branch must join the two source buses")
    emf = vs[0].params.get("v", 1.0) * np.exp(1j * vs[0].params.get("theta", 0.0))
    i_dc = cs[0].params["i_mag"] * np.exp(1j * cs[0].params.get("phase", 0.0))
    if branch.x <= 0.0:
        raise ParamDomain("circuit branch needs positive reactance")
    return emf, i_dc, branch, vs[0], cs[0]


def circuit_dc_waveforms(scenario: Scenario, dt: float, t_end: float):
    """(times, v_source_bus, v_injection_bus, i_source, i_injection)."""
    emf, i_dc, branch, _, _ = circuit_elements(scenario)
    omega_b = 2.0 * np.pi * scenario.f_nom
    t = dt * np.arange(int(round(t_end / dt)) + 1)
    rot = np.exp(-1j * omega_b * t)
    v1 = np.full_like(rot, emf)
    v2 = emf + branch.r * i_dc * rot
    i_cs = i_dc * rot
    i_vs = -i_dc * rot
    return t, v1, v2, i_cs, i_vs


def exact_voltage_cf(scenario: Scenario, t):
    """Symbolically differentiated CF of the injection-bus voltage.

    For v(t) = E + R*I*exp(-j*w_b*t) the CF is v'/(v*w_b) with the absolute
    frame speed added back to the omega component.
    """
    emf, i_dc, branch, _, _ = circuit_elements(scenario)
    omega_b = 2.0 * np.pi * scenario.f_nom
    rot = np.exp(-1j * omega_b * np.asarray(t))
    v = emf + branch.r * i_dc * rot
    dv = -1j * omega_b * branch.r * i_dc * rot
    cf = dv / (v * omega_b)
    return cf.real, cf.imag + 1.0


def run_analytic(scenario: Scenario, config=None):
    """SimResult built from the closed form (run_simulation dispatch target)."""
    from ..sim import SimConfig, SimResult

    if scenario.analytic != ANALYTIC_KIND:
        raise SchemaError(f"unsupported analytic scenario {scenario.analytic!r}")
    config = config or SimConfig.from_scenario(scenario)
    _, _, branch, vs, cs = circuit_elements(scenario)
    t, v1, v2, i_cs, i_vs = circuit_dc_waveforms(scenario, config.dt,
                                                 config.t_end)
    dec = config.record_decimation
    sel = slice(None, None, dec)
    t = t[sel]
    n = len(t)
    return SimResult(
        scenario_name=scenario.name,
        t=t,
        dt=config.dt * dec,
        omega_b=2.0 * np.pi * scenario.f_nom,
        voltages={vs.bus: v1[sel], cs.bus: v2[sel]},
        currents={vs.id: i_vs[sel], cs.id: i_cs[sel]},
        states={},
        state_names={},
        active={vs.id: np.ones(n, dtype=bool), cs.id: np.ones(n, dtype=bool)},
        device_bus={vs.id: vs.bus, cs.id: cs.bus},
        device_kind={vs.id: vs.kind, cs.id: cs.kind},
        events=[],
        event_samples=[],
        diagnostics={"closed_form": True},
    )
