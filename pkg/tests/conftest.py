import numpy as np
import pytest

from niss.numerics import RngStream


@pytest.fixture
def stream():
    return RngStream(1234, ("test",))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def gradient_mismatch(loss_fn, grad, params, coords, step=1e-5, floor=1e-4):
    """Worst relative gap between ``grad`` and central differences of ``loss_fn`` at ``coords``."""
    worst = 0.0
    for i in coords:
        up, down = params.copy(), params.copy()
        up[i] += step
        down[i] -= step
        numeric = (loss_fn(up) - loss_fn(down)) / (2 * step)
        denom = max(abs(numeric), abs(grad[i]), floor)
        worst = max(worst, abs(numeric - grad[i]) / denom)
    return worst
