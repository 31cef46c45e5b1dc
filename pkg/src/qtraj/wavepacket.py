"""
Freely propagating Gaussian slit waves.

Each slit emits a normalized one-dimensional Gaussian packet

    psi(x, t) = (2 pi)^(-1/4) A_t^(-1/2)
                exp(-(x - x_c(t))^2 / (4 sigma0 A_t) + i p0 (x - x0 - p0 t / 2m) / hbar)

with complex width ``A_t = sigma0 + i hbar t / (2 m sigma0)`` and centre
``x_c(t) = x0 + p0 t / m``. ``|A_t|`` is the spatial spread of ``|psi|^2``.
All quantities are SI.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import constants

HBAR = constants.hbar
H_PLANCK = constants.h
NEUTRON_MASS = constants.physical_constants["neutron mass"][0]

_NORM = (2.0 * np.pi) ** -0.25


@dataclass(frozen=True)
class GaussianPacket:
    """Free Gaussian wave leaving one slit.

    Parameters
    ----------
    center_x0 : float
        Packet centre at t = 0 (m).
    sigma0 : float
        Standard deviation of ``|psi|^2`` at t = 0 (m).
    p0 : float
        Transverse momentum (kg m/s).
    mass, hbar : float
        Particle mass (kg) and reduced Planck constant (J s).
    """

    center_x0: float
    sigma0: float
    p0: float = 0.0
    mass: float = NEUTRON_MASS
    hbar: float = HBAR

    def __post_init__(self):
        for name in ("center_x0", "sigma0", "p0", "mass", "hbar"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.sigma0 <= 0:
            raise ValueError(f"sigma0 must be positive, got {self.sigma0!r}")
        if self.mass <= 0:
            raise ValueError(f"mass must be positive, got {self.mass!r}")
        if self.hbar <= 0:
            raise ValueError(f"hbar must be positive, got {self.hbar!r}")

    @property
    def spreading_rate(self) -> float:
        """hbar / (2 m sigma0^2), the inverse spreading time (1/s)."""
        return self.hbar / (2.0 * self.mass * self.sigma0**2)

    def spread(self, t):
        """Standard deviation of ``|psi|^2`` at time ``t``."""
        t = np.asarray(t, dtype=float)
        return self.sigma0 * np.sqrt(1.0 + (self.spreading_rate * t) ** 2)

    def spread_rate(self, t):
        """Time derivative of :meth:`spread`."""
        t = np.asarray(t, dtype=float)
        return self.sigma0 * self.spreading_rate**2 * t / np.sqrt(1.0 + (self.spreading_rate * t) ** 2)

    def center(self, t):
        """Classical centre ``x0 + p0 t / m``."""
        return self.center_x0 + self.p0 * np.asarray(t, dtype=float) / self.mass

    def complex_width(self, t):
        return self.sigma0 + 1j * self.hbar * np.asarray(t, dtype=float) / (2.0 * self.mass * self.sigma0)


def _check_inputs(x, t):
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    if not np.all(np.isfinite(t)):
        raise ValueError("t must be finite")
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    return x, t


def _psi_and_gradient(packet: GaussianPacket, x, t):
    # Unchecked hot path shared by the field assembly and the integrator.
    width = packet.sigma0 + 1j * (packet.hbar / (2.0 * packet.mass * packet.sigma0)) * t
    shift = x - packet.center_x0
    if packet.p0 != 0.0:
        shift = shift - packet.p0 * t / packet.mass
    log_gauss = -(shift * shift) / (4.0 * packet.sigma0 * width)
    k0 = packet.p0 / packet.hbar
    if k0 != 0.0:
        log_gauss = log_gauss + 1j * k0 * (x - packet.center_x0 - 0.5 * packet.p0 * t / packet.mass)
    psi = _NORM / np.sqrt(width) * np.exp(log_gauss)
    dpsi = psi * (-shift / (2.0 * packet.sigma0 * width) + 1j * k0)
    return psi, dpsi


def evaluate_wave(packet: GaussianPacket, x, t):
    """Complex amplitude ``psi(x, t)`` (units m^-1/2). Accepts scalars or arrays."""
    x, t = _check_inputs(x, t)
    return _psi_and_gradient(packet, x, t)[0]


def wave_gradient(packet: GaussianPacket, x, t):
    """Analytic spatial derivative ``d psi / dx``."""
    x, t = _check_inputs(x, t)
    return _psi_and_gradient(packet, x, t)[1]


def wave_density(packet: GaussianPacket, x, t):
    """Single-slit probability density ``|psi(x, t)|^2``."""
    x, t = _check_inputs(x, t)
    s = packet.spread(t)
    return np.exp(-0.5 * ((x - packet.center(t)) / s) ** 2) / (np.sqrt(2.0 * np.pi) * s)


def single_wave_velocity(packet: GaussianPacket, x, t):
    """Bohmian velocity ``(hbar/m) Im[psi* dpsi/dx] / |psi|^2`` of a lone packet."""
    x, t = _check_inputs(x, t)
    psi, dpsi = _psi_and_gradient(packet, x, t)
    return packet.hbar / packet.mass * np.imag(np.conj(psi) * dpsi) / np.abs(psi) ** 2


@lru_cache(maxsize=64)
def overlap(packet1: GaussianPacket, packet2: GaussianPacket) -> complex:
    """Inner product ``<psi_2|psi_1> = integral psi_1 conj(psi_2) dx``.

    Conserved under free evolution, so evaluated at t = 0. Both packets must
    share mass and hbar.
    """
    if packet1.mass != packet2.mass or packet1.hbar != packet2.hbar:
        raise ValueError("packets must share mass and hbar")
    s1, s2 = packet1.sigma0, packet2.sigma0
    k1, k2 = packet1.p0 / packet1.hbar, packet2.p0 / packet2.hbar
    x1, x2 = packet1.center_x0, packet2.center_x0
    # psi1 conj(psi2) = N exp(-a x^2 + b x + c)
    a = 1.0 / (4 * s1**2) + 1.0 / (4 * s2**2)
    b = x1 / (2 * s1**2) + x2 / (2 * s2**2) + 1j * (k1 - k2)
    c = -(x1**2) / (4 * s1**2) - x2**2 / (4 * s2**2) - 1j * (k1 * x1 - k2 * x2)
    norm = (2 * np.pi * s1**2) ** -0.25 * (2 * np.pi * s2**2) ** -0.25
    return complex(norm * np.sqrt(np.pi / a) * np.exp(b * b / (4 * a) + c))
