"""
Tests for 2D/3D convolution and the finite-difference gradient checker.
"""

import importlib

import numpy as np
import pytest
from scipy.signal import correlate

from tyolo.core.errors import ShapeError
from tyolo.tensor import ops
from tyolo.tensor.conv import ConvSpec, conv2d, conv3d
from tyolo.tensor.gradcheck import grad_check
from tyolo.tensor.tensor import Function, Tensor


def _reference_conv2d(x, w, b, pad):
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((x.shape[0], w.shape[0]) + tuple(np.array(xp.shape[2:]) - w.shape[2:] + 1))
    for n in range(x.shape[0]):
        for o in range(w.shape[0]):
            out[n, o] = correlate(xp[n], w[o], mode="valid")[0] + b[o]
    return out


class TestConvSpec:
    """Geometry validation"""

    def test_same_padding_default(self):
        spec = ConvSpec.square(4, 8, 3)
        assert spec.padding == (1, 1)
        assert spec.weight_shape == (8, 4, 3, 3)
        assert spec.output_spatial(16, 16) == (16, 16)

    def test_strided_output(self):
        assert ConvSpec.square(4, 8, 3, stride=2).output_spatial(16, 16) == (8, 8)

    def test_invalid_temporal_kernel(self):
        with pytest.raises(ValueError):
            ConvSpec.square(1, 1, 3, kernel_temporal=4)

    def test_empty_output_rejected(self):
        with pytest.raises(ShapeError):
            ConvSpec.square(1, 1, 5, padding=0).output_spatial(3, 3)

    def test_temporal_kernel_exceeding_frames(self):
        with pytest.raises(ShapeError):
            ConvSpec.square(1, 1, 3, kernel_temporal=3).output_temporal(2)


class TestConv2d:
    """Forward values against scipy and gradients against finite differences"""

    def setup_method(self):
        self.rng = np.random.default_rng(1)

    def test_matches_reference(self):
        x = self.rng.standard_normal((2, 3, 7, 7))
        w = self.rng.standard_normal((4, 3, 3, 3))
        b = self.rng.standard_normal(4)
        out = conv2d(Tensor(x), Tensor(w), Tensor(b), ConvSpec.square(3, 4, 3))
        np.testing.assert_allclose(out.data, _reference_conv2d(x, w, b, 1), rtol=1e-10, atol=1e-10)

    def test_stride_subsamples_full_output(self):
        x = self.rng.standard_normal((1, 2, 8, 8))
        w = self.rng.standard_normal((3, 2, 3, 3))
        b = np.zeros(3)
        full = conv2d(Tensor(x), Tensor(w), Tensor(b), ConvSpec.square(2, 3, 3))
        strided = conv2d(Tensor(x), Tensor(w), Tensor(b), ConvSpec.square(2, 3, 3, stride=2))
        np.testing.assert_allclose(strided.data, full.data[:, :, ::2, ::2], rtol=1e-10)

    def test_gradients(self):
        spec = ConvSpec.square(2, 3, 3, stride=2)
        x = Tensor(self.rng.standard_normal((2, 2, 6, 6)))
        w = Tensor(self.rng.standard_normal(spec.weight_shape))
        b = Tensor(self.rng.standard_normal(3))
        assert grad_check(lambda a, k, c: ops.pow(conv2d(a, k, c, spec), 2.0), [x, w, b]) < 1e-4

    def test_channel_mismatch(self):
        spec = ConvSpec.square(3, 4, 3)
        with pytest.raises(ShapeError):
            conv2d(Tensor(np.zeros((1, 2, 5, 5))), Tensor(np.zeros(spec.weight_shape)), None, spec)

    def test_requires_4d_input(self):
        spec = ConvSpec.square(1, 1, 3)
        with pytest.raises(ShapeError):
            conv2d(Tensor(np.zeros((1, 5, 5))), Tensor(np.zeros(spec.weight_shape)), None, spec)


class TestConv3d:
    """Temporal convolution used by the quasi-recurrent cell"""

    def setup_method(self):
        self.rng = np.random.default_rng(2)

    def test_temporal_window_count(self):
        spec = ConvSpec.square(2, 3, 3, kernel_temporal=2)
        x = Tensor(self.rng.standard_normal((1, 2, 5, 6, 6)))
        w = Tensor(self.rng.standard_normal(spec.weight_shape))
        assert conv3d(x, w, None, spec).shape == (1, 3, 4, 6, 6)

    def test_temporal_kernel_one_matches_conv2d(self):
        spec = ConvSpec.square(2, 3, 3)
        x = self.rng.standard_normal((1, 2, 3, 6, 6))
        w = Tensor(self.rng.standard_normal(spec.weight_shape))
        out3 = conv3d(Tensor(x), w, None, spec)
        for t in range(3):
            out2 = conv2d(Tensor(x[:, :, t]), w, None, spec)
            np.testing.assert_allclose(out3.data[:, :, t], out2.data, rtol=1e-10, atol=1e-12)

    def test_gradients(self):
        spec = ConvSpec.square(2, 2, 3, kernel_temporal=2)
        x = Tensor(self.rng.standard_normal((1, 2, 3, 4, 4)))
        w = Tensor(self.rng.standard_normal(spec.weight_shape))
        b = Tensor(self.rng.standard_normal(2))
        assert grad_check(lambda a, k, c: ops.pow(conv3d(a, k, c, spec), 2.0), [x, w, b]) < 1e-4


class TestGradCheck:
    """The checker itself must notice a wrong gradient"""

    def test_detects_wrong_backward(self):
        class WrongSquare(Function):
            def forward(self, x):
                self.x = x
                return x * x

            def backward(self, grad):
                return (grad * self.x,)  # missing factor 2

        x = Tensor(np.array([1.0, 2.0, 3.0]))
        assert grad_check(lambda t: WrongSquare.apply(t), [x]) > 0.4

    def test_subsamples_large_inputs(self):
        x = Tensor(np.random.default_rng(0).standard_normal(50))
        assert grad_check(lambda t: ops.pow(t, 3.0), [x], max_elements=10) < 1e-4


@pytest.mark.parametrize("package", ["tyolo.nn", "tyolo.tensor", "tyolo.temporal"])
def test_exported_names_resolve(package):
    module = importlib.import_module(package)
    assert all(hasattr(module, name) for name in module.__all__)
    assert "Sequential" not in module.__all__
