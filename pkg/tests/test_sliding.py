import numpy as np
import pytest

from voxelforge import (
    BinaryMask,
    ClassPrompt,
    ConstantPredictor,
    ContractError,
    LabelVolume,
    OraclePredictor,
    PointPrompt,
    Volume,
    point_local_inference,
    sliding_window,
)
from voxelforge.sliding import BlendKernel, grid_origins, local_patch_origin
from voxelforge.grid import crop_patch


class NormalizedIntensityPredictor:
    """Returns globally min-max-normalized patch intensities as probabilities."""

    concurrent_safe = True

    def __init__(self, vol: Volume):
        self.lo = float(vol.data.min())
        self.hi = float(vol.data.max())

    def interactive(self, patch, points):
        return self.auto(patch, None)

    def auto(self, patch, prompt):
        span = self.hi - self.lo if self.hi > self.lo else 1.0
        out = (patch.data.astype(np.float64) - self.lo) / span
        out[patch.pad_mask] = 0.0
        return np.clip(out, 0.0, 1.0)


class BadShapePredictor:
    concurrent_safe = True

    def auto(self, patch, prompt):
        return np.zeros((2, 2, 2))

    def interactive(self, patch, points):
        return np.zeros((2, 2, 2))


class TestBlendKernel:
    def test_constant_weights_are_one(self):
        assert (BlendKernel("constant").weights((4, 4, 4)) == 1.0).all()

    def test_gaussian_weights_positive_and_peaked(self):
        w = BlendKernel("gaussian", 0.125).weights((16, 16, 16))
        assert (w > 0).all()
        assert w.max() == w[7, 7, 7] or w.max() == w[8, 8, 8]
        assert w[0, 0, 0] < w[8, 8, 8]

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            BlendKernel("pyramid")


class TestGridOrigins:
    def test_small_dim_single_origin(self):
        assert grid_origins(10, 16, 0.25) == [0]

    def test_last_patch_touches_boundary(self):
        origins = grid_origins(100, 32, 0.25)
        assert origins[0] == 0
        assert origins[-1] == 68
        assert all(b > a for a, b in zip(origins, origins[1:]))

    def test_zero_overlap_tiles(self):
        assert grid_origins(64, 32, 0.0) == [0, 32]


class TestSlidingWindow:
    @pytest.mark.parametrize("overlap", [0.0, 0.25, 0.5])
    @pytest.mark.parametrize("blend", ["constant", "gaussian"])
    def test_constant_field_invariance(self, overlap, blend):
        vol = Volume(np.zeros((40, 30, 20), dtype=np.float32))
        out = sliding_window(
            vol,
            ConstantPredictor(0.7),
            ClassPrompt(1),
            patch_size=(16, 16, 16),
            overlap=overlap,
            blend=BlendKernel(blend),
        )
        assert np.abs(out.data - 0.7).max() <= 1e-6

    def test_volume_smaller_than_patch_matches_single_call(self):
        rng = np.random.default_rng(0)
        vol = Volume(rng.random((6, 5, 4)).astype(np.float32))
        pred = NormalizedIntensityPredictor(vol)
        out = sliding_window(vol, pred, ClassPrompt(1), patch_size=(8, 8, 8), overlap=0.25)
        direct = pred.auto(crop_patch(vol, (0, 0, 0), (8, 8, 8)), None)[:6, :5, :4]
        np.testing.assert_allclose(out.data, direct, atol=1e-6)

    def test_identity_probability_predictor_reproduces_input(self):
        rng = np.random.default_rng(1)
        vol = Volume(rng.random((30, 24, 18)).astype(np.float32))
        pred = NormalizedIntensityPredictor(vol)
        out = sliding_window(
            vol, pred, ClassPrompt(1), patch_size=(16, 16, 16), overlap=0.5,
            blend=BlendKernel("gaussian"),
        )
        span = vol.data.max() - vol.data.min()
        expect = (vol.data - vol.data.min()) / span
        assert np.abs(out.data - expect).max() <= 1e-6

    def test_thread_count_does_not_change_results(self):
        rng = np.random.default_rng(2)
        vol = Volume(rng.random((30, 30, 30)).astype(np.float32))
        pred = NormalizedIntensityPredictor(vol)
        kwargs = dict(patch_size=(16, 16, 16), overlap=0.25)
        serial = sliding_window(vol, pred, ClassPrompt(1), threads=1, **kwargs)
        parallel = sliding_window(vol, pred, ClassPrompt(1), threads=8, **kwargs)
        np.testing.assert_array_equal(serial.data, parallel.data)

    def test_memory_budget_spill_matches_in_memory(self):
        rng = np.random.default_rng(3)
        vol = Volume(rng.random((20, 20, 20)).astype(np.float32))
        pred = NormalizedIntensityPredictor(vol)
        kwargs = dict(patch_size=(12, 12, 12), overlap=0.25)
        ram = sliding_window(vol, pred, ClassPrompt(1), **kwargs)
        spilled = sliding_window(vol, pred, ClassPrompt(1), memory_budget=1024, **kwargs)
        np.testing.assert_array_equal(ram.data, spilled.data)

    def test_point_prompts_are_dispatched(self):
        data = np.zeros((12, 12, 12), dtype=np.int32)
        data[4:8, 4:8, 4:8] = 3
        gt = LabelVolume(data)
        vol = Volume(np.zeros((12, 12, 12), dtype=np.float32))
        out = sliding_window(
            vol, OraclePredictor(gt), [PointPrompt((5, 5, 5), True)],
            patch_size=(8, 8, 8), overlap=0.0, blend=BlendKernel("constant"),
        )
        np.testing.assert_array_equal(out.data > 0.5, data == 3)

    def test_bad_predictor_shape_is_contract_error(self):
        vol = Volume(np.zeros((10, 10, 10), dtype=np.float32))
        with pytest.raises(ContractError):
            sliding_window(vol, BadShapePredictor(), ClassPrompt(1), patch_size=(8, 8, 8))

    def test_overlap_bounds(self):
        vol = Volume(np.zeros((4, 4, 4), dtype=np.float32))
        with pytest.raises(ValueError):
            sliding_window(vol, ConstantPredictor(0.5), ClassPrompt(1), overlap=1.0)


class TestPointLocalInference:
    def test_support_confined_to_centered_patch(self):
        dims = (64, 64, 64)
        data = np.ones(dims, dtype=np.int32)
        gt = LabelVolume(data)
        vol = Volume(np.zeros(dims, dtype=np.float32))
        mask, origin = point_local_inference(
            vol, [PointPrompt((32, 32, 32), True)], OraclePredictor(gt), patch_size=(16, 16, 16)
        )
        assert origin == (24, 24, 24)
        outside = mask.data.copy()
        outside[24:40, 24:40, 24:40] = False
        assert not outside.any()
        assert mask.data[24:40, 24:40, 24:40].all()

    def test_corner_click_clamps_to_zero_origin(self):
        vol = Volume(np.zeros((32, 32, 32), dtype=np.float32))
        gt = LabelVolume(np.ones((32, 32, 32), dtype=np.int32))
        _, origin = point_local_inference(
            vol, [PointPrompt((0, 0, 0), True)], OraclePredictor(gt), patch_size=(16, 16, 16)
        )
        assert origin == (0, 0, 0)

    def test_oracle_click_inside_blob_recovers_blob(self):
        data = np.zeros((24, 24, 24), dtype=np.int32)
        data[6:12, 6:12, 6:12] = 4
        gt = LabelVolume(data)
        vol = Volume(np.zeros((24, 24, 24), dtype=np.float32))
        mask, _ = point_local_inference(
            vol, [PointPrompt((8, 8, 8), True)], OraclePredictor(gt), patch_size=(24, 24, 24)
        )
        np.testing.assert_array_equal(mask.data, data == 4)

    def test_anchor_prefers_first_positive(self):
        vol = Volume(np.zeros((64, 8, 8), dtype=np.float32))
        points = [
            PointPrompt((60, 4, 4), False),
            PointPrompt((10, 4, 4), True),
        ]
        gt = LabelVolume(np.zeros((64, 8, 8), dtype=np.int32))
        _, origin = point_local_inference(vol, points, OraclePredictor(gt), patch_size=(8, 8, 8))
        assert origin == (6, 0, 0)  # centered on the positive click

    def test_empty_points_rejected(self):
        vol = Volume(np.zeros((4, 4, 4), dtype=np.float32))
        with pytest.raises(ValueError):
            point_local_inference(vol, [], ConstantPredictor(0.5))

    def test_point_outside_dims_rejected(self):
        vol = Volume(np.zeros((4, 4, 4), dtype=np.float32))
        with pytest.raises(ValueError):
            point_local_inference(vol, [PointPrompt((9, 0, 0), True)], ConstantPredictor(0.5))

    def test_local_patch_origin_clamps_both_sides(self):
        assert local_patch_origin((0, 0, 0), (16, 16, 16), (64, 64, 64)) == (0, 0, 0)
        assert local_patch_origin((63, 63, 63), (16, 16, 16), (64, 64, 64)) == (48, 48, 48)
        assert local_patch_origin((2, 2, 2), (16, 16, 16), (8, 8, 8)) == (0, 0, 0)
