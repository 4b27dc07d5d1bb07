import numpy as np
import pytest

from diatomic_vlasov import StepControl, tangent_model


@pytest.fixture(scope="session")
def tan1():
    """Tangent model on the unit bond domain."""
    return tangent_model(1.0)


@pytest.fixture()
def control():
    return StepControl(dt=1e-3)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
