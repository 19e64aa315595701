import numpy as np
import pytest

import synthdata
from fcurve.basis import BSplineBasis, KnotScheme
from fcurve.smooth import smooth_panel


@pytest.fixture(scope="session")
def basis31():
    return BSplineBasis(KnotScheme.nonuniform31())


@pytest.fixture(scope="session")
def basis111():
    return BSplineBasis(KnotScheme.uniform111())


@pytest.fixture(scope="session")
def small_basis():
    # 12 breakpoints -> dimension 14; cheap enough for exhaustive checks
    return BSplineBasis(KnotScheme.custom(np.linspace(0.0, 110.0, 12)))


@pytest.fixture(scope="session")
def panel():
    return synthdata.make_panel(countries=("AAA", "BBB", "CCC"),
                                year_range=(1990, 1995), seed=3)


@pytest.fixture(scope="session")
def dataset31(panel, basis31):
    return smooth_panel(panel, basis31)
