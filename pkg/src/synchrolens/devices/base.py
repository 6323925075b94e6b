"""Shared device-layer types and frame helpers."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class DeviceKind(enum.Enum):
    SM6 = "sm6"
    SM4 = "sm4"
    SM2 = "sm2"
    ZIP = "zip"
    INDUCTION_MOTOR = "induction_motor"
    GFL_IBR = "gfl_ibr"
    GFM_IBR = "gfm_ibr"
    VOLTAGE_SOURCE = "voltage_source"
    DC_CURRENT_SOURCE = "dc_current_source"


@dataclass(frozen=True)
class XiTerms:
    """Decomposition of the injected-current CF: xi = xi_a + k_rho*rho + k_omega*omega."""

    xi_a: complex
    k_rho: complex
    k_omega: complex


def to_machine_frame(z_net: complex, delta: float) -> complex:
    """Network Park vector -> machine dq components (d + j*q)."""
    return 1j * np.exp(-1j * delta) * z_net


def from_machine_frame(z_m: complex, delta: float) -> complex:
    """Machine dq components -> network Park vector."""
    return -1j * np.exp(1j * delta) * z_m
