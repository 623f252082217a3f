import pytest
from hypothesis import settings

settings.register_profile("suite", deadline=None)
settings.load_profile("suite")


@pytest.fixture
def no_spread_kernel():
    """Kernel whose reach is effectively zero: rounds never end early."""
    from fieldlab.engine import TransmissionKernel

    return TransmissionKernel(distance_scale=1e-9, level_damping=0.5)
