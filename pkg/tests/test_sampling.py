import numpy as np
import pytest

from voxelforge import (
    BinaryMask,
    LabelVolume,
    NoSampleError,
    OraclePredictor,
    SamplerConfig,
    SegmentationSession,
    Volume,
    next_eval_click,
    sample_class_prompts,
    sample_fp_fn_points,
    sample_pair,
)
from voxelforge.sampling import PointSampler, foreground_center
from voxelforge.supervoxel import SupervoxelMap


def grid_supervoxels(dims, block):
    """Regular block partition as a stand-in supervoxel map."""
    labels = np.zeros(dims, dtype=np.int32)
    next_id = 1
    for x0 in range(0, dims[0], block):
        for y0 in range(0, dims[1], block):
            for z0 in range(0, dims[2], block):
                labels[x0 : x0 + block, y0 : y0 + block, z0 : z0 + block] = next_id
                next_id += 1
    return SupervoxelMap(labels, n_segments_requested=next_id - 1, n_segments_actual=next_id - 1)


@pytest.fixture
def sources():
    data = np.zeros((12, 12, 12), dtype=np.int32)
    data[2:8, 2:8, 2:8] = 3  # 216-voxel class mask
    labels = LabelVolume(data)
    sv = grid_supervoxels((12, 12, 12), 4)
    return labels, sv


def cfg_for(branch: str) -> SamplerConfig:
    if branch == "direct":
        return SamplerConfig(p_direct=1.0, p_supervoxel_pair=0.0, p_edit=0.0)
    if branch == "supervoxel":
        return SamplerConfig(p_direct=0.0, p_supervoxel_pair=1.0, p_edit=0.0)
    return SamplerConfig(p_direct=0.0, p_supervoxel_pair=0.0, p_edit=1.0)


class TestSamplePair:
    def test_direct_branch_returns_class_mask_with_inside_point(self, sources):
        labels, sv = sources
        pair = sample_pair(labels, None, sv, cfg_for("direct"), np.random.default_rng(0))
        assert pair.source == "manual"
        assert not pair.zero_shot
        np.testing.assert_array_equal(pair.target.data, labels.data == 3)
        assert len(pair.points) == 1
        assert pair.points[0].positive
        assert pair.target.data[pair.points[0].position]

    def test_supervoxel_branch_is_zero_shot(self, sources):
        labels, sv = sources
        pair = sample_pair(labels, None, sv, cfg_for("supervoxel"), np.random.default_rng(1))
        assert pair.source == "supervoxel"
        assert pair.zero_shot
        ids = np.unique(sv.labels[pair.target.data])
        assert len(ids) == 1  # target is exactly one supervoxel region
        assert pair.target.count == (sv.labels == ids[0]).sum()

    def test_edit_branch_produces_edited_mask(self, sources):
        labels, sv = sources
        found_edit = False
        for seed in range(20):
            pair = sample_pair(labels, None, sv, cfg_for("edit"), np.random.default_rng(seed))
            if pair.source != "edited":
                continue
            found_edit = True
            base = labels.data == 3
            delta = pair.target.data ^ base
            assert delta.any()
            sv_ids = np.unique(sv.labels[delta])
            assert len(sv_ids) == 1  # the edit is one supervoxel's worth
        assert found_edit

    def test_large_edit_is_flagged_zero_shot(self):
        data = np.zeros((8, 8, 8), dtype=np.int32)
        data[0:4, 0:8, 0:8] = 1  # 256-voxel mask
        labels = LabelVolume(data)
        # one supervoxel overlapping most of the mask, another outside
        sv_labels = np.ones((8, 8, 8), dtype=np.int32)
        sv_labels[0:4, 0:4, 0:8] = 2  # 128 voxels inside the mask
        sv = SupervoxelMap(sv_labels, 2, 2)
        cfg = SamplerConfig(
            p_direct=0.0,
            p_supervoxel_pair=0.0,
            p_edit=1.0,
            edit_size_min=0.1,
            edit_size_max=0.9,
            zero_shot_size_limit=0.25,
        )
        saw_zero_shot = False
        for seed in range(30):
            pair = sample_pair(labels, None, sv, cfg, np.random.default_rng(seed))
            if pair.source == "edited" and (pair.target.data ^ (data == 1)).sum() > 0.25 * 256:
                assert pair.zero_shot
                saw_zero_shot = True
        assert saw_zero_shot

    def test_membership_invariants_hold_across_seeds(self, sources):
        labels, sv = sources
        cfg = SamplerConfig()
        for seed in range(200):
            pair = sample_pair(labels, None, sv, cfg, np.random.default_rng(seed))
            for p in pair.points:
                inside = bool(pair.target.data[p.position])
                assert inside == p.positive

    def test_pseudo_label_used_when_manual_missing(self, sources):
        labels, sv = sources
        pair = sample_pair(None, labels, sv, cfg_for("direct"), np.random.default_rng(2))
        assert pair.source == "pseudo"

    def test_nothing_to_sample_is_error(self):
        empty = LabelVolume(np.zeros((4, 4, 4), dtype=np.int32))
        with pytest.raises(NoSampleError):
            sample_pair(empty, None, None, SamplerConfig(), np.random.default_rng(0))

    def test_direct_branch_rate_tracks_p_direct(self, sources):
        labels, sv = sources
        cfg = SamplerConfig()
        rng = np.random.default_rng(123)
        n = 2000
        direct = sum(
            1 for _ in range(n) if sample_pair(labels, None, sv, cfg, rng).source == "manual"
        )
        assert abs(direct / n - cfg.p_direct) < 0.04

    def test_point_sampler_value_type(self, sources):
        labels, sv = sources
        sampler = PointSampler(labels, sv, seed=9)
        a = sampler.sample()
        b = PointSampler(labels, sv, seed=9).sample()
        np.testing.assert_array_equal(a.target.data, b.target.data)
        assert a.points == b.points
        clone = sampler.clone_with_seed(10)
        assert clone.seed == 10

    def test_point_sampler_pseudo_kind_marks_provenance(self, sources):
        labels, sv = sources
        sampler = PointSampler(labels, sv, cfg_for("direct"), seed=3, label_kind="pseudo")
        assert sampler.sample().source == "pseudo"
        with pytest.raises(ValueError):
            PointSampler(labels, sv, label_kind="synthetic")

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SamplerConfig(p_direct=0.9, p_supervoxel_pair=0.3, p_edit=0.3)
        with pytest.raises(ValueError):
            SamplerConfig(edit_size_min=0.5, edit_size_max=0.1)
        with pytest.raises(ValueError):
            SamplerConfig(max_iter=0)
        assert SamplerConfig().max_iter == 5


class TestFpFnPoints:
    def test_perfect_prediction_yields_nothing(self):
        m = BinaryMask(np.ones((4, 4, 4), dtype=bool))
        assert sample_fp_fn_points(m, m, np.random.default_rng(0)) == []

    def test_empty_prediction_yields_single_positive(self):
        gt = np.zeros((5, 5, 5), dtype=bool)
        gt[1:3, 1:3, 1:3] = True
        points = sample_fp_fn_points(
            BinaryMask(np.zeros_like(gt)), BinaryMask(gt), np.random.default_rng(1)
        )
        assert len(points) == 1
        assert points[0].positive
        assert gt[points[0].position]

    def test_both_regions_give_two_points_with_memberships(self):
        rng = np.random.default_rng(2)
        for seed in range(50):
            pred = rng.random((6, 6, 6)) < 0.5
            gt = rng.random((6, 6, 6)) < 0.5
            if not (pred & ~gt).any() or not (gt & ~pred).any():
                continue
            points = sample_fp_fn_points(
                BinaryMask(pred), BinaryMask(gt), np.random.default_rng(seed)
            )
            assert len(points) == 2
            neg, pos = points
            assert not neg.positive and pos.positive
            assert pred[neg.position] and not gt[neg.position]
            assert gt[pos.position] and not pred[pos.position]


class TestNextEvalClick:
    def test_first_click_is_cube_center(self):
        gt = np.zeros((9, 9, 9), dtype=bool)
        gt[3:6, 3:6, 3:6] = True
        click = next_eval_click(
            BinaryMask(np.zeros_like(gt)), BinaryMask(gt), np.random.default_rng(0), first=True
        )
        assert click.positive
        assert click.position == (4, 4, 4)

    def test_larger_fp_component_wins_and_gets_negative_click(self):
        gt = np.zeros((12, 4, 4), dtype=bool)
        pred = np.zeros((12, 4, 4), dtype=bool)
        pred[0:10, 0, 0] = True          # FP of 10
        gt[11, 0:2, 0:1] = True          # FN of 2
        click = next_eval_click(BinaryMask(pred), BinaryMask(gt), np.random.default_rng(1))
        assert not click.positive
        assert pred[click.position] and not gt[click.position]

    def test_perfect_prediction_returns_none(self):
        m = np.zeros((4, 4, 4), dtype=bool)
        m[1, 1, 1] = True
        assert next_eval_click(BinaryMask(m), BinaryMask(m), np.random.default_rng(2)) is None

    def test_first_click_on_empty_gt_rejected(self):
        empty = BinaryMask(np.zeros((3, 3, 3), dtype=bool))
        with pytest.raises(ValueError):
            next_eval_click(empty, empty, np.random.default_rng(3), first=True)

    def test_iterative_clicks_with_oracle_strictly_reduce_error(self):
        data = np.zeros((16, 16, 16), dtype=np.int32)
        data[1:4, 1:4, 1:4] = 1
        data[6:9, 6:9, 6:9] = 1
        data[12:15, 12:15, 12:15] = 1
        gt = BinaryMask(data > 0)
        session = SegmentationSession(
            volume=Volume(np.zeros(data.shape, dtype=np.float32)),
            predictor=OraclePredictor(LabelVolume(data)),
            patch_size=data.shape,
        )
        rng = np.random.default_rng(4)
        errors = [int((session.current.data ^ gt.data).sum())]
        for k in range(10):
            click = next_eval_click(session.current, gt, rng, first=(k == 0))
            if click is None:
                break
            session.apply_click(click)
            errors.append(int((session.current.data ^ gt.data).sum()))
        assert errors[-1] == 0
        assert all(b < a for a, b in zip(errors, errors[1:]))

    def test_foreground_center_is_inside_concave_mask(self):
        mask = np.zeros((9, 9, 3), dtype=bool)
        mask[0:9, 0:2, :] = True
        mask[0:2, 2:9, :] = True  # L-shape: centroid falls outside
        center = foreground_center(BinaryMask(mask))
        assert mask[center]


class TestClassPrompts:
    def test_background_prompts_from_label_set_difference(self):
        data = np.zeros((6, 6, 6), dtype=np.int32)
        data[0:2] = 1
        data[4:6] = 3
        label = LabelVolume(data, label_set=frozenset({1, 2, 3, 4}))
        pairs = sample_class_prompts(label, {1, 2, 3, 4}, max_fg=32, max_bg=4,
                                     rng=np.random.default_rng(0))
        fg = [(p, m) for p, m in pairs if m.data.any()]
        bg = [(p, m) for p, m in pairs if not m.data.any()]
        assert {p.class_index for p, _ in fg} == {1, 3}
        assert {p.class_index for p, _ in bg} <= {2, 4}
        for p, m in fg:
            np.testing.assert_array_equal(m.data, data == p.class_index)

    def test_no_background_when_label_set_fully_present(self):
        data = np.zeros((4, 4, 4), dtype=np.int32)
        data[0] = 1
        data[2] = 2
        label = LabelVolume(data)
        pairs = sample_class_prompts(label, {1, 2}, rng=np.random.default_rng(1))
        assert all(m.data.any() for _, m in pairs)

    def test_limits_respected(self):
        data = np.zeros((8, 2, 2), dtype=np.int32)
        for i in range(8):
            data[i] = i + 1
        label = LabelVolume(data)
        pairs = sample_class_prompts(label, set(range(1, 20)), max_fg=3, max_bg=2,
                                     rng=np.random.default_rng(2))
        fg = [p for p, m in pairs if m.data.any()]
        bg = [p for p, m in pairs if not m.data.any()]
        assert len(fg) == 3
        assert len(bg) == 2

    def test_defaults_are_32_and_4(self):
        import inspect

        sig = inspect.signature(sample_class_prompts)
        assert sig.parameters["max_fg"].default == 32
        assert sig.parameters["max_bg"].default == 4

    def test_background_never_intersects_present(self):
        rng = np.random.default_rng(3)
        label_set = set(range(1, 11))
        for seed in range(50):
            data = rng.integers(0, 6, size=(5, 5, 5)).astype(np.int32)
            label = LabelVolume(data)
            pairs = sample_class_prompts(label, label_set, rng=np.random.default_rng(seed))
            present = set(label.present_classes())
            for prompt, mask in pairs:
                if not mask.data.any():
                    assert prompt.class_index not in present
