"""Backend agreement: the compiled kernels and the NumPy fallback implement
the same functions (up to float summation order); the adjoints match a
quadrature-free inner-product identity on random data."""

import numpy as np
import pytest

from geomotion import _kernels as K
from geomotion._kernels import fallback as F

BACKENDS = [("selected", K)] + ([("fallback", F)] if K.BACKEND == "compiled" else [])

rng = np.random.default_rng(8)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
class TestBackendAgreement:
    def test_conv2d_forward(self, dtype):
        x = rng.normal(size=(2, 3, 9, 7)).astype(dtype)
        w = rng.normal(size=(4, 3, 3, 3)).astype(dtype)
        b = rng.normal(size=4).astype(dtype)
        a = K.conv2d_forward(x, w, b)
        c = F.conv2d_forward(x, w, b)
        assert a.dtype == dtype
        np.testing.assert_allclose(a, c, rtol=1e-5, atol=1e-5)

    def test_conv2d_backward(self, dtype):
        x = rng.normal(size=(2, 3, 8, 6)).astype(dtype)
        w = rng.normal(size=(5, 3, 3, 3)).astype(dtype)
        gy = rng.normal(size=(2, 5, 8, 6)).astype(dtype)
        np.testing.assert_allclose(
            K.conv2d_backward_input(gy, w), F.conv2d_backward_input(gy, w),
            rtol=1e-5, atol=1e-5,
        )
        np.testing.assert_allclose(
            K.conv2d_backward_weight(gy, x, 3, 3),
            F.conv2d_backward_weight(gy, x, 3, 3), rtol=1e-4, atol=1e-4,
        )

    def test_bilinear_roundtrip(self, dtype):
        x = rng.normal(size=(1, 2, 12, 10)).astype(dtype)
        np.testing.assert_allclose(
            K.bilinear_resize_forward(x, 5, 4), F.bilinear_resize_forward(x, 5, 4),
            rtol=1e-6, atol=1e-6,
        )
        gy = rng.normal(size=(1, 2, 5, 4)).astype(dtype)
        np.testing.assert_allclose(
            K.bilinear_resize_backward(gy, 12, 10),
            F.bilinear_resize_backward(gy, 12, 10), rtol=1e-6, atol=1e-6,
        )


@pytest.mark.parametrize("name,impl", BACKENDS)
class TestAdjointIdentity:
    """<A x, y> == <x, A^T y> for the linear kernels, per backend."""

    def test_conv_adjoint(self, name, impl):
        x = rng.normal(size=(1, 2, 6, 5))
        w = rng.normal(size=(3, 2, 3, 3))
        y = rng.normal(size=(1, 3, 6, 5))
        lhs = (impl.conv2d_forward(x, w) * y).sum()
        rhs = (x * impl.conv2d_backward_input(y, w)).sum()
        assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_conv_weight_adjoint(self, name, impl):
        x = rng.normal(size=(1, 2, 6, 5))
        w = rng.normal(size=(3, 2, 3, 3))
        y = rng.normal(size=(1, 3, 6, 5))
        lhs = (impl.conv2d_forward(x, w) * y).sum()
        rhs = (w * impl.conv2d_backward_weight(y, x, 3, 3)).sum()
        assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_bilinear_adjoint(self, name, impl):
        x = rng.normal(size=(1, 1, 9, 11))
        y = rng.normal(size=(1, 1, 4, 5))
        lhs = (impl.bilinear_resize_forward(x, 4, 5) * y).sum()
        rhs = (x * impl.bilinear_resize_backward(y, 9, 11)).sum()
        assert lhs == pytest.approx(rhs, rel=1e-10)


class TestSemantics:
    def test_conv_same_padding_identity_kernel(self):
        x = rng.normal(size=(1, 1, 5, 5)).astype(np.float32)
        w = np.zeros((1, 1, 3, 3), dtype=np.float32)
        w[0, 0, 1, 1] = 1.0
        np.testing.assert_allclose(K.conv2d_forward(x, w), x, rtol=1e-6)

    def test_bilinear_identity_resize(self):
        x = rng.normal(size=(1, 1, 6, 6)).astype(np.float32)
        np.testing.assert_allclose(K.bilinear_resize_forward(x, 6, 6), x, rtol=1e-6)

    def test_bilinear_constant_preserved(self):
        x = np.full((1, 1, 10, 8), 3.25, dtype=np.float32)
        out = K.bilinear_resize_forward(x, 3, 5)
        np.testing.assert_allclose(out, 3.25, rtol=1e-6)

    def test_deterministic_repeat(self):
        x = rng.normal(size=(2, 2, 16, 16)).astype(np.float32)
        w = rng.normal(size=(4, 2, 3, 3)).astype(np.float32)
        a = K.conv2d_forward(x, w, None)
        b = K.conv2d_forward(x.copy(), w.copy(), None)
        assert np.array_equal(a, b)
