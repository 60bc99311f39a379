import numpy as np
import pytest

from rdlab.dataset import Compliance, RDDataset, RDDesign


@pytest.fixture
def design_zero():
    return RDDesign(cutoff=0.0)


@pytest.fixture
def smooth_data():
    """Continuous scores with a known jump of 0.4 at the cutoff."""
    rng = np.random.default_rng(2024)
    x = rng.uniform(-2.0, 2.0, 1500)
    y = 0.5 * x - 0.3 * x**2 + 0.4 * (x >= 0) + rng.normal(0.0, 0.25, 1500)
    return RDDataset(score=x, outcome=y)


@pytest.fixture
def fuzzy_data():
    """Imperfect compliance: take-up jumps from 0.25 to 0.85 at the cutoff."""
    rng = np.random.default_rng(77)
    n = 4000
    x = rng.uniform(-1.0, 1.0, n)
    d = (rng.random(n) < np.where(x >= 0, 0.85, 0.25)).astype(float)
    y = 0.2 + 0.3 * x + 0.5 * d + rng.normal(0.0, 0.3, n)
    return RDDataset(score=x, outcome=y, received=d)


@pytest.fixture
def fuzzy_design():
    return RDDesign(cutoff=0.0, compliance=Compliance.FUZZY)
