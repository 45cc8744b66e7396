import numpy as np
import pytest

from nmattn import backend


def _available_backends():
    names = ["numpy"]
    try:
        import numba  # noqa: F401

        names.insert(0, "numba")
    except ImportError:
        pass
    return names


@pytest.fixture(params=_available_backends())
def any_backend(request):
    """Run a test under every installed kernel backend."""
    previous = backend.active_backend()
    backend.set_backend(request.param)
    yield request.param
    backend.set_backend(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
