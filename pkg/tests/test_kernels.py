import numpy as np
import pytest

from rdlcqr.exceptions import UnsupportedOrder
from rdlcqr.kernels import KernelSpec, eval_kernel, one_sided_moments

from oracles import quad_moment

BOUNDED = ["triangular", "epanechnikov", "uniform"]


def test_triangular_values():
    k = KernelSpec("triangular")
    assert eval_kernel(k, 0.0) == 1.0
    assert eval_kernel(k, 2.0) == 0.0
    assert eval_kernel(k, -0.5) == 0.5


@pytest.mark.parametrize("family", BOUNDED + ["gaussian"])
def test_kernel_symmetric_and_normalized(family):
    k = KernelSpec(family)
    u = np.linspace(-0.97, 0.97, 41)
    assert np.allclose(eval_kernel(k, u), eval_kernel(k, -u))
    m = one_sided_moments(k, "above")
    total = m.mu[0] + one_sided_moments(k, "below").mu[0]
    assert total == pytest.approx(1.0, abs=1e-10)


def test_triangular_above_moments():
    m = one_sided_moments(KernelSpec("triangular"), "above")
    assert m.mu[0] == pytest.approx(0.5, abs=1e-14)
    assert m.mu[2] == pytest.approx(1 / 12, abs=1e-14)
    assert m.nu[2] == pytest.approx(1 / 30, abs=1e-14)
    assert m.nu[1] == pytest.approx(1 / 12, abs=1e-14)


@pytest.mark.parametrize("family", BOUNDED)
@pytest.mark.parametrize("side", ["above", "below"])
def test_closed_form_matches_quadrature(family, side):
    k = KernelSpec(family)
    m = one_sided_moments(k, side)
    for j in range(8):
        assert m.mu[j] == pytest.approx(quad_moment(k, j, side), abs=1e-10)
        assert m.nu[j] == pytest.approx(quad_moment(k, j, side, squared=True), abs=1e-10)


@pytest.mark.parametrize("family", BOUNDED + ["gaussian"])
def test_two_sided_sums_and_sign_structure(family):
    k = KernelSpec(family)
    above = one_sided_moments(k, "above")
    below = one_sided_moments(k, "below")
    for j in range(8):
        full = above.mu[j] + below.mu[j]
        if j % 2 == 1:
            assert full == pytest.approx(0.0, abs=1e-12)
        assert above.mu[j] == pytest.approx((-1) ** j * below.mu[j], abs=1e-12)
        if j % 2 == 0:
            assert above.nu[j] >= 0.0
            assert below.nu[j] >= 0.0
    assert above.mu[0] > 0 and above.nu[0] > 0


def test_unsupported_order():
    with pytest.raises(UnsupportedOrder):
        one_sided_moments(KernelSpec("triangular"), "above", max_order=2)


def test_unknown_family():
    with pytest.raises(ValueError):
        KernelSpec("cosine")
