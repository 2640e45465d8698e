import numpy as np
import pytest
import torch

from echoef.attention import (
    MotionExcitation,
    SemanticTCA,
    SqueezeExcitation,
    TemporalChannelAttention,
    dilate_mask,
    excite,
    mask_to_gate,
    temporal_pool,
)
from echoef.errors import InvalidConfigError, InvalidInputError
from echoef.gradcheck import check_gradients


def rand_features(n=1, c=16, t=2, h=2, w=2, seed=0, dtype=torch.float64):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(n, c, t, h, w, generator=g, dtype=dtype)


# ---------------------------------------------------------------------------
# Independent oracle: Eq.-level recomposition from primitive numpy ops.
# ---------------------------------------------------------------------------


def pooled_descriptors_oracle(x: np.ndarray, window: int):
    """x: (C, T, H, W). Returns (dmax, dmean), each (C, T): spatial means of
    sliding-window temporal max/mean pools with replicate padding."""
    c, t, h, w = x.shape
    half = window // 2
    dmax = np.zeros((c, t))
    dmean = np.zeros((c, t))
    for ti in range(t):
        lo, hi = ti - half, ti + half
        idx = [min(max(j, 0), t - 1) for j in range(lo, hi + 1)]
        win = x[:, idx]  # (C, window, H, W)
        dmax[:, ti] = win.max(axis=1).mean(axis=(1, 2))
        dmean[:, ti] = win.mean(axis=1).mean(axis=(1, 2))
    return dmax, dmean


def tca_weights_oracle(x, w1, b1, w2, b2, window):
    """Brute-force attention weights for one sample: sigmoid of the
    two-layer channel MLP applied per frame to (dmax - dmean)."""
    dmax, dmean = pooled_descriptors_oracle(x, window)
    d = dmax - dmean  # (C, T)
    hidden = np.maximum(w1 @ d + b1[:, None], 0.0)  # (C/r, T)
    return 1.0 / (1.0 + np.exp(-(w2 @ hidden + b2[:, None])))  # (C, T)


def module_mats(block):
    w1 = block.gate.squeeze.weight.detach().numpy()[:, :, 0]
    b1 = block.gate.squeeze.bias.detach().numpy()
    w2 = block.gate.expand.weight.detach().numpy()[:, :, 0]
    b2 = block.gate.expand.bias.detach().numpy()
    return w1, b1, w2, b2


class TestTemporalPool:
    def test_constant_sequence_identity(self):
        x = torch.ones(1, 3, 5, 2, 2, dtype=torch.float64)
        xmax, xmean = temporal_pool(x, 3)
        assert torch.equal(xmax, x)
        assert torch.equal(xmean, x)

    def test_window_one_identity(self):
        x = rand_features()
        xmax, xmean = temporal_pool(x, 1)
        assert torch.equal(xmax, x)
        assert torch.equal(xmean, x)

    def test_even_window_rejected(self):
        with pytest.raises(InvalidConfigError):
            temporal_pool(rand_features(), 2)

    def test_three_frame_values(self):
        # per-frame values 0, 1, 2 at one location, window 3, replicate pad
        x = torch.zeros(1, 1, 3, 1, 1, dtype=torch.float64)
        x[0, 0, :, 0, 0] = torch.tensor([0.0, 1.0, 2.0])
        xmax, xmean = temporal_pool(x, 3)
        assert xmax[0, 0, :, 0, 0].tolist() == [1.0, 2.0, 2.0]
        assert torch.allclose(
            xmean[0, 0, :, 0, 0], torch.tensor([1 / 3, 1.0, 5 / 3], dtype=torch.float64)
        )

    def test_matches_oracle_random(self):
        x = rand_features(1, 3, 7, 4, 5, seed=9)
        xmax, xmean = temporal_pool(x, 3)
        dmax, dmean = pooled_descriptors_oracle(x[0].numpy(), 3)
        assert np.allclose(xmax[0].mean(dim=(2, 3)).numpy(), dmax, atol=1e-12)
        assert np.allclose(xmean[0].mean(dim=(2, 3)).numpy(), dmean, atol=1e-12)


class TestTcaWeights:
    def test_constant_input_gives_half(self):
        block = TemporalChannelAttention(16, reduction=16).double()
        x = torch.full((2, 16, 4, 3, 3), 2.5, dtype=torch.float64)
        e = block.weights(x)
        assert torch.allclose(e, torch.full_like(e, 0.5))

    def test_range_open_interval(self):
        block = TemporalChannelAttention(16, reduction=4).double()
        e = block.weights(rand_features(2, 16, 4, 3, 3, seed=1))
        assert bool((e > 0).all()) and bool((e < 1).all())

    def test_channels_not_divisible_rejected(self):
        with pytest.raises(InvalidConfigError):
            TemporalChannelAttention(10, reduction=16)

    def test_matches_bruteforce_oracle(self):
        torch.manual_seed(123)
        block = TemporalChannelAttention(16, reduction=16, window=3).double()
        with torch.no_grad():
            for p in block.parameters():
                p.normal_()
        x = rand_features(1, 16, 2, 1, 1, seed=5)
        e = block.weights(x)[0].numpy()  # (C, T)
        oracle = tca_weights_oracle(x[0].numpy(), *module_mats(block), 3)
        assert np.abs(e - oracle).max() < 1e-6


class TestExcite:
    def test_zero_weights_identity(self):
        x = rand_features()
        e = torch.zeros(x.shape[:3], dtype=x.dtype)
        assert torch.equal(excite(x, e), x)

    def test_unit_weights_double(self):
        x = rand_features()
        e = torch.ones(x.shape[:3], dtype=x.dtype)
        assert torch.allclose(excite(x, e), 2 * x)

    def test_zero_input(self):
        x = torch.zeros(1, 4, 2, 2, 2)
        e = torch.rand(1, 4, 2)
        assert not excite(x, e).any()

    def test_shape_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            excite(rand_features(), torch.zeros(1, 3, 2))

    def test_ratio_bounds_where_nonzero(self):
        block = TemporalChannelAttention(8, reduction=4).double()
        x = rand_features(1, 8, 3, 2, 2, seed=3)
        out = block(x)
        ratio = out[x != 0] / x[x != 0]
        assert bool((ratio > 1).all()) and bool((ratio < 2).all())


class TestSemanticTCA:
    def make(self, seed=0):
        torch.manual_seed(seed)
        block = SemanticTCA(8, reduction=4, window=3).double()
        with torch.no_grad():
            for p in block.parameters():
                p.normal_()
        return block

    def test_all_ones_mask_equals_plain_tca(self):
        block = self.make()
        x = rand_features(2, 8, 4, 3, 3, seed=2)
        gate = torch.ones(3, 3, dtype=torch.float64)
        plain = excite(x, block.weights(x))
        gated = block(x, gate)
        assert torch.equal(gated, plain)  # bit-exact reduction

    def test_all_zero_mask_falls_back(self, caplog):
        block = self.make()
        x = rand_features(1, 8, 4, 3, 3, seed=4)
        gate = torch.zeros(3, 3, dtype=torch.float64)
        with caplog.at_level("WARNING"):
            gated = block(x, gate)
        plain = excite(x, block.weights(x))
        assert torch.equal(gated, plain)
        assert any("all-zero mask" in rec.message for rec in caplog.records)

    def test_matches_compositional_oracle(self):
        # Manually zero half the grid, run the brute-force weight oracle on
        # the concealed features, then excite the original input.
        block = self.make(seed=7)
        x = rand_features(1, 8, 2, 2, 2, seed=8)
        gate = torch.zeros(2, 2, dtype=torch.float64)
        gate[0, :] = 1.0
        out = block(x, gate)
        concealed = (x * gate[None, None, None]).numpy()[0]
        w1, b1, w2, b2 = module_mats(block)
        e = tca_weights_oracle(concealed, w1, b1, w2, b2, 3)
        expected = x[0].numpy() * e[:, :, None, None] + x[0].numpy()
        assert np.abs(out[0].numpy() - expected).max() < 1e-6

    def test_mask_is_gradient_stopped(self):
        block = self.make(seed=9)
        x = rand_features(1, 8, 2, 2, 2, seed=10)
        gate = torch.ones(2, 2, dtype=torch.float64, requires_grad=True)
        out = block(x, gate)
        out.sum().backward()
        assert gate.grad is None or not gate.grad.any()


class TestDilateMask:
    def test_single_seed_grows_to_block(self):
        prob = torch.zeros(5, 5)
        prob[2, 2] = 1.0
        gate = dilate_mask(prob, kernel=3)
        assert gate[1:4, 1:4].sum() == 9
        assert gate.sum() == 9

    def test_all_zero_stays_zero(self):
        assert not dilate_mask(torch.zeros(4, 4), kernel=3).any()

    def test_uniform_above_threshold(self):
        gate = dilate_mask(torch.full((4, 4), 0.6), kernel=3, threshold=0.5)
        assert gate.sum() == 16

    def test_even_kernel_rejected(self):
        with pytest.raises(InvalidConfigError):
            dilate_mask(torch.zeros(4, 4), kernel=4)

    def test_mask_to_gate_downsamples_by_area(self):
        prob = torch.zeros(8, 8)
        prob[:4, :4] = 1.0  # top-left quadrant
        gate = mask_to_gate(prob, (2, 2), kernel=1, threshold=0.5)
        assert gate.tolist() == [[1.0, 0.0], [0.0, 0.0]]


class TestBaselines:
    def test_se_unit_gate_preserves_input(self):
        block = SqueezeExcitation(8, reduction=4).double()
        with torch.no_grad():
            block.gate.expand.weight.zero_()
            block.gate.expand.bias.fill_(50.0)  # sigmoid saturates to 1.0
        x = rand_features(1, 8, 3, 2, 2, seed=1)
        assert torch.equal(block(x), x)

    def test_me_constant_input_gives_half_weights(self):
        block = MotionExcitation(8, reduction=4).double()
        x = torch.full((2, 8, 4, 3, 3), 1.7, dtype=torch.float64)
        assert torch.allclose(block.weights(x), torch.full((2, 8, 4), 0.5).double())

    @pytest.mark.parametrize("cls", [SqueezeExcitation, MotionExcitation])
    def test_shape_preserved(self, cls):
        block = cls(8, reduction=4).double()
        x = rand_features(2, 8, 4, 5, 6, seed=3)
        assert block(x).shape == x.shape

    def test_tca_shape_preserved(self):
        block = TemporalChannelAttention(8, reduction=4).double()
        x = rand_features(2, 8, 4, 5, 6, seed=3)
        assert block(x).shape == x.shape


class TestGradients:
    def loss_through(self, block, x, coeffs, gate=None):
        def fn():
            out = block(x, gate) if gate is not None else block(x)
            return (out * coeffs).sum()

        return fn

    def test_tca_gradcheck(self):
        torch.manual_seed(0)
        block = TemporalChannelAttention(16, reduction=16).double()
        with torch.no_grad():
            for p in block.parameters():
                p.normal_(std=0.5)
        x = rand_features(1, 16, 2, 2, 2, seed=1)
        coeffs = rand_features(1, 16, 2, 2, 2, seed=2)
        params = list(block.parameters()) + [x]
        err = check_gradients(self.loss_through(block, x, coeffs), params)
        assert err < 1e-4

    def test_stca_gradcheck(self):
        torch.manual_seed(3)
        block = SemanticTCA(8, reduction=4).double()
        with torch.no_grad():
            for p in block.parameters():
                p.normal_(std=0.5)
        x = rand_features(1, 8, 2, 2, 2, seed=4)
        coeffs = rand_features(1, 8, 2, 2, 2, seed=5)
        gate = torch.tensor([[1.0, 0.0], [1.0, 1.0]], dtype=torch.float64)
        params = list(block.parameters()) + [x]
        err = check_gradients(self.loss_through(block, x, coeffs, gate), params)
        assert err < 1e-4
