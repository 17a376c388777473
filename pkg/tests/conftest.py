from __future__ import annotations

import math

import numpy as np
import pytest

from thirdscatter.potentials import PotentialPair, free, gauss
from thirdscatter.riemann_hilbert import ReflectionlessSolution, centered_norming_constant
from thirdscatter.spectral import XGrid


SOLITON_POLE = 1.1 * complex(math.cos(1.2 * math.pi), math.sin(1.2 * math.pi))


@pytest.fixture
def small_grid() -> XGrid:
    return XGrid(-10.0, 10.0, 1024)


@pytest.fixture
def soliton_grid() -> XGrid:
    return XGrid(-16.0, 16.0, 2048)


@pytest.fixture
def free_pair() -> PotentialPair:
    return free()


@pytest.fixture
def gauss_pair() -> PotentialPair:
    return gauss(eps=0.5, p_ratio=0.3)


@pytest.fixture
def soliton() -> ReflectionlessSolution:
    return ReflectionlessSolution(
        poles=np.array([SOLITON_POLE]), gammas=np.array([centered_norming_constant(SOLITON_POLE)])
    )
