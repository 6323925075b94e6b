"""Static ZIP load model and its closed-form admittance CF."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cf import MIN_MAG, ComplexFrequency, ParkVector
from ..errors import MixedZipUnsupportedAnalytic, ParamDomain, VoltageTooSmall

_SHARE_TOL = 1e-9


@dataclass(frozen=True)
class ZipParams:
    """ZIP load: p0/q0 drawn at v=1, split into P/I/Z shares per quantity."""

    p0: float
    q0: float
    k_pp: float = 0.0
    k_ip: float = 0.0
    k_zp: float = 1.0
    k_pq: float = 0.0
    k_iq: float = 0.0
    k_zq: float = 1.0

    def __post_init__(self):
        if abs(self.k_pp + self.k_ip + self.k_zp - 1.0) > _SHARE_TOL:
            raise ParamDomain("active-power shares must sum to 1")
        if abs(self.k_pq + self.k_iq + self.k_zq - 1.0) > _SHARE_TOL:
            raise ParamDomain("reactive-power shares must sum to 1")

    def pure_kind(self):
        """'z', 'i' or 'p' when both quantities are single-component, else None."""
        for kind, kp, kq in (("p", self.k_pp, self.k_pq),
                             ("i", self.k_ip, self.k_iq),
                             ("z", self.k_zp, self.k_zq)):
            if abs(kp - 1.0) <= _SHARE_TOL and abs(kq - 1.0) <= _SHARE_TOL:
                return kind
        return None


def zip_power(params: ZipParams, v_mag: float):
    """(p, q) drawn from the bus at voltage magnitude v_mag."""
    p = params.p0 * (params.k_pp + params.k_ip * v_mag + params.k_zp * v_mag ** 2)
    q = params.q0 * (params.k_pq + params.k_iq * v_mag + params.k_zq * v_mag ** 2)
    return p, q


def zip_current(v: ParkVector, params: ZipParams) -> ParkVector:
    """Current injected into the network (negative of the drawn current)."""
    v_c = v.to_complex()
    v_mag = abs(v_c)
    if v_mag < MIN_MAG:
        raise VoltageTooSmall(f"|v|={v_mag:.3e} below MIN_MAG")
    p, q = zip_power(params, v_mag)
    i_drawn = np.conj(complex(p, q) / v_c)
    return ParkVector.from_complex(-i_drawn)


def zip_injection(params: ZipParams, v_net: complex) -> complex:
    v_mag = abs(v_net)
    if v_mag < MIN_MAG:
        raise VoltageTooSmall(f"|v|={v_mag:.3e} below MIN_MAG")
    p, q = zip_power(params, v_mag)
    return -np.conj(complex(p, q) / v_net)


def zip_chi(params: ZipParams, eta: ComplexFrequency) -> ComplexFrequency:
    """Closed-form chi: 0 (Z), -rho (I) or -2*rho (P); omega part is zero."""
    kind = params.pure_kind()
    if kind is None:
        raise MixedZipUnsupportedAnalytic(
            "mixed ZIP loads have no closed-form chi; use the numeric route"
        )
    factor = {"z": 0.0, "i": -1.0, "p": -2.0}[kind]
    return ComplexFrequency(factor * eta.rho, 0.0)
