import numpy as np
import pytest

from fatsim.autodiff import Tensor
from fatsim.errors import DescriptorMismatchError, ShapeError
from fatsim.model import ArchDescriptor, ModelParams, axpy, forward, init_model, layout, parameter_count, predict_proba


def test_init_is_deterministic(desc):
    assert init_model(desc, 3).equal(init_model(desc, 3))
    assert not init_model(desc, 3).equal(init_model(desc, 4))


def test_init_biases_are_zero(params):
    for layer in params.layers:
        assert np.all(layer.bias.data == 0)


def test_init_kernel_std_matches_he():
    # "mid" with F=4 has fan_in 2F * 9 = 72
    desc = ArchDescriptor(in_channels=1, base_width=4, n_classes=3)
    draws = np.concatenate([init_model(desc, s).layer("mid").kernel.data.reshape(-1) for s in range(50)])
    assert draws.size >= 10_000
    assert abs(draws.std() - np.sqrt(2.0 / 72)) < 0.1 * np.sqrt(2.0 / 72)


def test_parameter_count_closed_form():
    desc = ArchDescriptor(in_channels=1, base_width=8, n_classes=3)
    expected = (8 * 1 * 9 + 8) + (16 * 8 * 9 + 16) + (16 * 16 * 9 + 16) + (8 * 24 * 9 + 8) + (3 * 8 + 3)
    assert parameter_count(desc) == expected == 5331
    assert init_model(desc, 0).n_params == expected


def test_layout_names():
    assert [s.name for s in layout(ArchDescriptor())] == ["enc1", "down", "mid", "dec", "head"]


def test_zero_params_give_uniform_softmax(desc):
    x = Tensor(np.random.default_rng(0).normal(size=(2, 1, 8, 8)))
    zeros = ModelParams.zeros(desc)
    assert np.all(forward(zeros, x).data == 0)
    np.testing.assert_allclose(predict_proba(zeros, x).data, 1.0 / 3, atol=1e-7)


def test_forward_output_shape():
    desc = ArchDescriptor(in_channels=1, base_width=8, n_classes=3)
    out = forward(init_model(desc, 0), Tensor(np.zeros((2, 1, 16, 16))))
    assert out.shape == (2, 3, 16, 16)


@pytest.mark.parametrize("hw", [(2, 2), (4, 6), (10, 8)])
def test_forward_preserves_spatial_size(params, hw):
    out = forward(params, Tensor(np.ones((1, 1) + hw)))
    assert out.shape[2:] == hw


def test_forward_rejects_odd_size(params):
    with pytest.raises(ShapeError):
        forward(params, Tensor(np.zeros((1, 1, 7, 8))))


def test_forward_rejects_channel_mismatch(params):
    with pytest.raises(ShapeError):
        forward(params, Tensor(np.zeros((1, 2, 8, 8))))


def test_params_reject_wrong_shapes(desc):
    arrays = ModelParams.zeros(desc).arrays()
    arrays["mid.kernel"] = np.zeros((1, 1, 3, 3))
    with pytest.raises(ShapeError):
        ModelParams.from_arrays(desc, arrays)


def test_axpy_identities(params, desc):
    other = init_model(desc, 9)
    assert axpy(params, 0.0, other).equal(params)
    assert axpy(ModelParams.zeros(desc), 1.0, params).equal(params)
    assert np.all(axpy(params, -1.0, params).flat() == 0)


def test_axpy_is_linear(params, desc):
    b = init_model(desc, 5)
    lhs = axpy(params, 0.3, b).flat() + axpy(params, 0.5, b).flat() - params.flat()
    np.testing.assert_allclose(lhs, axpy(params, 0.8, b).flat(), atol=1e-5)


def test_axpy_rejects_descriptor_mismatch(params):
    with pytest.raises(DescriptorMismatchError):
        axpy(params, 1.0, init_model(ArchDescriptor(in_channels=1, base_width=2, n_classes=3), 0))
