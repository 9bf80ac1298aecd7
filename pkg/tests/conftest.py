import numpy as np
import pytest

from mastlab import autodiff as ad


@pytest.fixture
def f64():
    """Run a test at 64-bit float width, restoring the previous width after."""
    prev = ad.get_float_width()
    ad.set_float_width(64)
    yield
    ad.set_float_width(prev)


@pytest.fixture
def strict_mode():
    ad.set_debug_validation(True)
    yield
    ad.set_debug_validation(False)


def central_difference(f, x, h=1e-5):
    """Independent elementwise central-difference gradient of a scalar map.

    ``f`` takes a plain numpy array and returns a float; the graph (if any)
    is rebuilt on every evaluation, so this stays independent of the
    reverse-mode path it is used to check.
    """
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def assert_grad_close(analytic, numeric, rtol=1e-4, atol=1e-6):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    diff = np.abs(analytic - numeric)
    ok = (diff <= atol) | (diff <= rtol * np.abs(numeric))
    if not np.all(ok):
        worst = np.unravel_index(np.argmax(diff), diff.shape)
        raise AssertionError(
            f"gradient mismatch at {worst}: analytic={analytic[worst]}, "
            f"numeric={numeric[worst]}, abs diff={diff[worst]}"
        )
