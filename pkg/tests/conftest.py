import numpy as np
import pytest

from qtraj import DecoherenceModel, FieldContext, GaussianPacket
from qtraj.wavepacket import NEUTRON_MASS

TAU_F = 2.33e-2
TAU_C = 2.26e-2
SIGMA0 = 10e-6
SEPARATION = 126e-6


def neutron_packets(separation=SEPARATION, sigma0=SIGMA0, p0=0.0):
    half = separation / 2
    return (
        GaussianPacket(half, sigma0, p0, NEUTRON_MASS),
        GaussianPacket(-half, sigma0, -p0, NEUTRON_MASS),
    )


def symmetric_context(tau_c=np.inf, **model_kw):
    p1, p2 = neutron_packets()
    return FieldContext(DecoherenceModel(tau_c=tau_c, **model_kw), p1, p2)


@pytest.fixture
def packets():
    return neutron_packets()


@pytest.fixture
def detector_grid():
    """Transverse grid at the detector covering the whole pattern."""
    return np.linspace(-1e-3, 1e-3, 2000)
