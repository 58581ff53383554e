import numpy as np
import pytest

from anisolab import anisotropy as aniso
from anisolab import geometry as geom


@pytest.fixture(scope="session")
def iso_model():
    return aniso.isotropic()


@pytest.fixture(scope="session")
def quadric3():
    return aniso.quadric(np.diag([4.0, 1.0, 1.0]))


@pytest.fixture(scope="session")
def quadric4():
    return aniso.quadric(np.diag([4.0, 1.0, 1.0, 1.0]))


@pytest.fixture(scope="session")
def pnorm4_model():
    return aniso.pnorm(4)


@pytest.fixture(scope="session")
def sphere2():
    return geom.build_sphere(1.0, 2, 64)


@pytest.fixture(scope="session")
def sphere3():
    return geom.build_sphere(1.0, 3, 32)


@pytest.fixture(scope="session")
def ellipsoid2():
    return geom.build_ellipsoid([2.0, 1.0, 1.0], 64)


@pytest.fixture(scope="session")
def wulff_q2(quadric3):
    return geom.build_wulff(quadric3, 1.0, 2, 64)


@pytest.fixture(scope="session")
def wulff_q4(quadric4):
    return geom.build_wulff(quadric4, 1.0, 3, 32)


@pytest.fixture(scope="session")
def torus2():
    return geom.build_torus(2.0, 0.5, 64)
