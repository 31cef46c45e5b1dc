"""
Environment footprint on the reduced two-slit system.

The environment enters only through the overlap ``alpha_t`` of the two
environment branches, ``|alpha_t| = exp(-t / tau_c)``, and (per trajectory)
through the exponential screening of the empty slit's coefficient with time
constant ``tau_s``. ``tau_c`` = 0 and ``tau_c`` = inf are exact limits.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .wavepacket import GaussianPacket, _check_inputs, _psi_and_gradient, overlap

_NORM_TOL = 1e-12


class SlitLabel(enum.IntEnum):
    """Slit a trajectory went through. Slit 1 sits at x > 0, slit 2 at x < 0."""

    SLIT1 = 1
    SLIT2 = 2

    @property
    def other(self) -> "SlitLabel":
        return SlitLabel.SLIT2 if self is SlitLabel.SLIT1 else SlitLabel.SLIT1


@dataclass(frozen=True)
class DecoherenceModel:
    """Coherence time, screening time and superposition coefficients.

    ``tau_c`` may be ``0.0`` (no coherence for t > 0) or ``math.inf``; ``tau_s``
    may be ``math.inf`` (no screening). ``alpha_phase`` is the phase of the
    environment overlap and shifts the interference term.
    """

    tau_c: float = math.inf
    tau_s: float = math.inf
    c1: complex = 1 / math.sqrt(2)
    c2: complex = 1 / math.sqrt(2)
    alpha_phase: float = 0.0

    def __post_init__(self):
        if math.isnan(self.tau_c) or self.tau_c < 0:
            raise ValueError(f"tau_c must be >= 0 or inf, got {self.tau_c!r}")
        if math.isnan(self.tau_s) or self.tau_s <= 0:
            raise ValueError(f"tau_s must be > 0 or inf, got {self.tau_s!r}")
        norm = abs(self.c1) ** 2 + abs(self.c2) ** 2
        if abs(norm - 1.0) > _NORM_TOL:
            raise ValueError(f"|c1|^2 + |c2|^2 must be 1, got {norm!r}")
        if not math.isfinite(self.alpha_phase):
            raise ValueError("alpha_phase must be finite")

    @property
    def eta(self) -> float:
        """Screening-to-coherence time ratio tau_s / tau_c."""
        if self.tau_c == 0:
            return math.inf
        if math.isinf(self.tau_c):
            return 0.0 if math.isfinite(self.tau_s) else math.nan
        return self.tau_s / self.tau_c

    @property
    def screening(self) -> bool:
        return math.isfinite(self.tau_s)


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("t must be finite")
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    return t


def _alpha(model, t):
    if math.isinf(model.tau_c):
        return np.ones_like(t)
    if model.tau_c == 0:
        return np.where(t == 0, 1.0, 0.0)
    with np.errstate(over="ignore"):
        return np.exp(-t / model.tau_c)


def alpha_magnitude(model: DecoherenceModel, t):
    """Environment overlap modulus ``|alpha_t|``."""
    return _alpha(model, _check_time(t))


def _coherence(model, t):
    a = _alpha(model, t)
    return 2.0 * a / (1.0 + a * a)


def coherence_degree(model: DecoherenceModel, t):
    """Coherence degree ``2|alpha| / (1 + |alpha|^2)``; sech(t/tau_c) for exponential decay."""
    return _coherence(model, _check_time(t))


def _screened(model, traversed, t):
    c1 = np.complex128(model.c1)
    c2 = np.complex128(model.c2)
    if not model.screening:
        return c1, c2
    traversed = np.asarray(traversed)
    decay = np.exp(-t / model.tau_s)
    on1 = traversed == SlitLabel.SLIT1
    c_trav = np.where(on1, c1, c2)
    c_empty = np.where(on1, c2, c1)
    empty_new = c_empty * decay
    trav_new = c_trav / np.abs(c_trav) * np.sqrt(1.0 - np.abs(c_empty) ** 2 * decay**2)
    return np.where(on1, trav_new, empty_new), np.where(on1, empty_new, trav_new)


def screening_coefficients(model: DecoherenceModel, traversed, t):
    """Time-dependent coefficients ``(c1', c2')`` for a trajectory through ``traversed``.

    The empty slit's coefficient decays as ``exp(-t/tau_s)``; the traversed one
    keeps its phase and absorbs the lost weight so the pair stays normalized.
    ``traversed`` may be a :class:`SlitLabel` or an integer array of labels.
    """
    t = _check_time(t)
    labels = np.asarray(traversed)
    if not np.all(np.isin(labels, (SlitLabel.SLIT1, SlitLabel.SLIT2))):
        raise ValueError(f"traversed must be a SlitLabel, got {traversed!r}")
    if np.any((labels == SlitLabel.SLIT1) & (model.c1 == 0)) or np.any(
        (labels == SlitLabel.SLIT2) & (model.c2 == 0)
    ):
        raise ValueError("the traversed slit has a zero coefficient")
    c1, c2 = _screened(model, labels, t)
    return np.broadcast_arrays(c1, c2) if np.ndim(c1) or np.ndim(c2) else (complex(c1), complex(c2))


def _density_and_flux(model, p1, p2, x, t, traversed=None):
    """Normalized diagonal of the reduced density matrix and ``Im[grad rho(x, x')]|_{x'=x}``.

    Returns ``(rho, im_grad)`` with the same normalization, so the reduced
    velocity is ``(hbar/m) * im_grad / rho``.
    """
    psi1, dpsi1 = _psi_and_gradient(p1, x, t)
    psi2, dpsi2 = _psi_and_gradient(p2, x, t)
    if traversed is None:
        c1, c2 = np.complex128(model.c1), np.complex128(model.c2)
    else:
        c1, c2 = _screened(model, traversed, t)
    w1 = np.abs(c1) ** 2
    w2 = np.abs(c2) ** 2
    cross = _coherence(model, t) * c1 * np.conj(c2)
    if model.alpha_phase:
        cross = cross * np.exp(1j * model.alpha_phase)
    psi12 = psi1 * np.conj(psi2)
    rho = w1 * (psi1.real**2 + psi1.imag**2) + w2 * (psi2.real**2 + psi2.imag**2) + 2.0 * np.real(cross * psi12)
    im_grad = (
        w1 * np.imag(np.conj(psi1) * dpsi1)
        + w2 * np.imag(np.conj(psi2) * dpsi2)
        + np.imag(cross * dpsi1 * np.conj(psi2) + np.conj(cross) * dpsi2 * np.conj(psi1))
    )
    norm = 1.0 + 2.0 * np.real(cross * overlap(p1, p2))
    return rho / norm, im_grad / norm


def reduced_density_diagonal(model: DecoherenceModel, p1: GaussianPacket, p2: GaussianPacket, x, t, screening=None):
    """Reduced probability density at ``x`` and time ``t`` (1/m).

    ``|c1|^2 rho_1 + |c2|^2 rho_2 + 2 Lambda_t |c1 c2 psi_1 psi_2| cos(delta')``,
    renormalized to unit integral. ``screening`` selects the traversed slit whose
    screened coefficients replace ``c1, c2``.
    """
    x, t = _check_inputs(x, t)
    if screening is not None and not model.screening:
        screening = None
    return _density_and_flux(model, p1, p2, x, t, screening)[0]


def classical_density(model: DecoherenceModel, p1: GaussianPacket, p2: GaussianPacket, x, t):
    """Incoherent mixture ``|c1|^2 rho_1 + |c2|^2 rho_2`` of the single-slit densities."""
    x, t = _check_inputs(x, t)
    psi1 = _psi_and_gradient(p1, x, t)[0]
    psi2 = _psi_and_gradient(p2, x, t)[0]
    return abs(model.c1) ** 2 * np.abs(psi1) ** 2 + abs(model.c2) ** 2 * np.abs(psi2) ** 2
