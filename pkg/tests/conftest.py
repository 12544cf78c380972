import numpy as np
import pytest

from remaster import kernels


@pytest.fixture(params=["numpy", "numba"])
def kernel_backend(request):
    """Run the decorated test once per convolution backend."""
    prev = kernels.backend_name()
    try:
        kernels.select_backend(request.param)
    except RuntimeError:
        pytest.skip(f"{request.param} backend unavailable")
    yield request.param
    kernels.select_backend(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
