"""
Reduced velocity field and probability current.

The field is ``(hbar/m) Im[d/dx rho(x, x')] / Re[rho(x, x')]`` at ``x' = x``,
assembled in closed form from the two slit waves, their gradients, the
coherence degree and the (possibly screened) coefficients. Screened
coefficients enter as time-dependent weights; the gradient acts on the
waves only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decoherence import DecoherenceModel, SlitLabel, _density_and_flux
from .errors import NodeProximity
from .wavepacket import GaussianPacket, _check_inputs, _psi_and_gradient

#: Absolute density floor (1/m) below which the velocity is not evaluated.
EPS_NODE = 1e-30


@dataclass(frozen=True)
class FieldContext:
    model: DecoherenceModel
    packet1: GaussianPacket
    packet2: GaussianPacket
    screening_enabled: bool = False
    traversed: SlitLabel | None = None

    def __post_init__(self):
        if self.screening_enabled and self.traversed is None:
            raise ValueError("screening_enabled requires a traversed slit")
        if self.packet1.mass != self.packet2.mass or self.packet1.hbar != self.packet2.hbar:
            raise ValueError("both packets must share mass and hbar")

    @property
    def hbar_over_m(self) -> float:
        return self.packet1.hbar / self.packet1.mass

    @property
    def active_screening(self) -> SlitLabel | None:
        """Traversed label if screening actually changes the coefficients."""
        if self.screening_enabled and self.model.screening:
            return self.traversed
        return None

    def for_slit(self, slit: SlitLabel) -> "FieldContext":
        """Copy of this context for a trajectory that went through ``slit``."""
        if not self.screening_enabled:
            return self
        return FieldContext(self.model, self.packet1, self.packet2, True, SlitLabel(slit))


def _flux(ctx: FieldContext, x, t, traversed=None):
    rho, im_grad = _density_and_flux(ctx.model, ctx.packet1, ctx.packet2, x, t, traversed)
    return rho, ctx.hbar_over_m * im_grad


def reduced_velocity(ctx: FieldContext, x, t):
    """Reduced Bohmian velocity (m/s) at ``x`` and ``t``.

    Raises
    ------
    NodeProximity
        If the reduced density at any requested point is below ``EPS_NODE``.
    """
    x, t = _check_inputs(x, t)
    rho, current = _flux(ctx, x, t, ctx.active_screening)
    if np.any(~(rho > EPS_NODE)):
        raise NodeProximity(f"reduced density below {EPS_NODE:g} 1/m")
    return current / rho


def reduced_current(ctx: FieldContext, x, t):
    """Reduced probability current ``rho * v`` (1/s); finite at nodes."""
    x, t = _check_inputs(x, t)
    return _flux(ctx, x, t, ctx.active_screening)[1]


def reduced_density(ctx: FieldContext, x, t):
    """Reduced density consistent with :func:`reduced_current` for this context."""
    x, t = _check_inputs(x, t)
    return _flux(ctx, x, t, ctx.active_screening)[0]


def classical_limit_velocity(ctx: FieldContext, x, t):
    """Density-weighted mean of the two single-slit velocities.

    This is the field the reduced velocity tends to once the interference term
    has decayed; it is evaluated from the single-wave quantities only.
    """
    x, t = _check_inputs(x, t)
    w1 = abs(ctx.model.c1) ** 2
    w2 = abs(ctx.model.c2) ** 2
    rho1, rho2, v1, v2 = _single_slit_terms(ctx, x, t)
    return (w1 * rho1 * v1 + w2 * rho2 * v2) / (w1 * rho1 + w2 * rho2)


def classical_limit_current(ctx: FieldContext, x, t):
    """``|c1|^2 rho_1 v_1 + |c2|^2 rho_2 v_2``."""
    x, t = _check_inputs(x, t)
    rho1, rho2, v1, v2 = _single_slit_terms(ctx, x, t)
    return abs(ctx.model.c1) ** 2 * rho1 * v1 + abs(ctx.model.c2) ** 2 * rho2 * v2


def _single_slit_terms(ctx, x, t):
    out = []
    for packet in (ctx.packet1, ctx.packet2):
        psi, dpsi = _psi_and_gradient(packet, x, t)
        rho = np.abs(psi) ** 2
        out.append((rho, ctx.hbar_over_m * np.imag(np.conj(psi) * dpsi) / rho))
    (rho1, v1), (rho2, v2) = out
    return rho1, rho2, v1, v2


def batch_field(ctx: FieldContext, x, t, traversed=None):
    """Vectorized ``(velocity, ok)`` for the integrator; never raises.

    ``traversed`` is an array of slit labels used when screening is active.
    ``ok`` is False where the density is below the node floor or the result
    is not finite.
    """
    labels = traversed if (ctx.screening_enabled and ctx.model.screening) else None
    rho, current = _flux(ctx, x, t, labels)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = current / rho
    ok = (rho > EPS_NODE) & np.isfinite(v)
    return np.where(ok, v, 0.0), ok
