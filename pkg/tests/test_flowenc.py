import numpy as np
import pytest

from geomotion import autodiff as ad
from geomotion import flowenc
from geomotion.autodiff import ParamStore, grad_check
from geomotion.errors import ConfigError

rng = np.random.default_rng(11)


def make_params(d_flow=4, seed=0):
    params = ParamStore()
    flowenc.init_flow_encoder(params, d_flow, np.random.default_rng(seed))
    return params


class TestEncodeFlow:
    def test_zero_flow_zero_bias_gives_zero_tokens(self):
        params = make_params()
        flows = np.zeros((2, 16, 16, 2), dtype=np.float32)
        tokens = flowenc.encode_flow(flows, params, (2, 2), 4)
        assert np.array_equal(tokens.data, np.zeros((2, 4, 4), dtype=np.float32))

    def test_paper_scale_shapes(self):
        params = make_params(d_flow=128)
        flows = np.zeros((1, 518, 518, 2), dtype=np.float32)
        tokens = flowenc.encode_flow(flows, params, (37, 37), 128)
        assert tokens.data.shape == (1, 1369, 128)

    def test_constant_flow_gives_identical_tokens(self):
        # constant input through conv + bilinear downsample: every token equal
        params = make_params()
        flows = np.full((1, 32, 32, 2), 1.0, dtype=np.float32)
        flows[..., 1] = 0.0
        tokens = flowenc.encode_flow(flows, params, (4, 4), 4).data[0]
        interior = tokens.reshape(4, 4, 4)[1:3, 1:3]  # away from zero padding
        assert np.allclose(interior, interior[0, 0], atol=1e-6)

    def test_first_layer_linearity_in_flow_scale(self):
        params = make_params()
        flows = rng.normal(size=(1, 16, 16, 2)).astype(np.float32)
        w, b = params["flowenc.conv1.weight"], params["flowenc.conv1.bias"]
        x1 = np.ascontiguousarray(flows.transpose(0, 3, 1, 2))
        pre1 = ad.conv2d(ad.Tensor(x1), w).data
        pre3 = ad.conv2d(ad.Tensor(3.0 * x1), w).data
        assert np.allclose(pre3, 3.0 * pre1, atol=1e-4)

    def test_gradient_through_conv_params(self):
        params = make_params()
        flows = rng.normal(size=(2, 8, 8, 2))
        w = params["flowenc.conv2.weight"]

        def fn(t):
            p = ParamStore()
            p.put("flowenc.conv2.weight", t)
            for name in ("flowenc.conv1.weight", "flowenc.conv1.bias", "flowenc.conv2.bias"):
                p.add(name, params[name].data.astype(np.float64))
            return ad.tsum(flowenc.encode_flow(flows, p, (2, 2), 4) ** 2.0)

        assert grad_check(fn, w.data.astype(np.float64)) < 1e-4

    def test_size_mismatch_rejected(self):
        params = make_params()
        with pytest.raises(Exception):
            flowenc.encode_flow(np.zeros((2, 16, 16, 3)), params, (2, 2), 4)

    def test_odd_d_flow_rejected(self):
        with pytest.raises(ConfigError):
            make_params(d_flow=3)


class TestLastFrameFlow:
    def test_two_frames(self):
        flow = rng.normal(size=(1, 4, 4, 2)).astype(np.float32)
        out = flowenc.last_frame_flow(flow)
        assert out.shape[0] == 2
        assert np.array_equal(out[0], out[1])

    def test_five_frames(self):
        flows = rng.normal(size=(4, 4, 4, 2)).astype(np.float32)
        out = flowenc.last_frame_flow(flows)
        assert out.shape[0] == 5
        assert np.array_equal(out[4], out[3])
        assert np.array_equal(out[:4], flows)

    def test_constant_velocity_duplication_is_exact(self, toy_sequence):
        # synthetic scenes keep one velocity per surface, so the duplicated
        # flow equals the true last-frame flow wherever the surface label
        # did not change between the last two frames
        true_flows = toy_sequence.flows
        out = flowenc.last_frame_flow(true_flows[:-1])
        same_surface = toy_sequence.surfaces[-2] == toy_sequence.surfaces[-1]
        assert same_surface.mean() > 0.8
        assert np.array_equal(out[-1][same_surface], true_flows[-1][same_surface])

    def test_single_frame_rejected(self):
        with pytest.raises(ConfigError):
            flowenc.last_frame_flow(np.zeros((0, 4, 4, 2)))
