"""Point and class prompt sampling for training-pair generation and the
simulated-click evaluation policy.

All sampling is driven by an explicit numpy Generator; identical seeds
yield identical draws.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .components import connected_components, largest_component, structuring_element
from .errors import NoSampleError
from .grid import BinaryMask, LabelVolume, empty_mask
from .prompts import ClassPrompt, PointPrompt, PromptContext
from .supervoxel import SupervoxelMap

Coord = tuple[int, int, int]


@dataclass(frozen=True)
class TrainingPair:
    """Sampled points with the binary mask they should produce."""

    points: tuple[PointPrompt, ...]
    target: BinaryMask
    zero_shot: bool
    source: str  # "manual" | "pseudo" | "supervoxel" | "edited"

    def __post_init__(self):
        if self.source not in ("manual", "pseudo", "supervoxel", "edited"):
            raise ValueError(f"unknown pair source {self.source!r}")
        for p in self.points:
            inside = bool(self.target.data[p.position])
            if p.positive and not inside:
                raise ValueError(f"positive point {p.position} outside target")
            if not p.positive and inside:
                raise ValueError(f"negative point {p.position} inside target")
        object.__setattr__(self, "points", tuple(self.points))


@dataclass(frozen=True)
class SamplerConfig:
    """Branch probabilities and edit-size rules for pair sampling.

    Size fields are fractions of the edited class-mask size by default
    (``sizes_relative=True``); set it False to treat them as absolute voxel
    counts.
    """

    p_direct: float = 0.5
    p_supervoxel_pair: float = 0.25
    p_edit: float = 0.25
    edit_size_min: float = 0.05
    edit_size_max: float = 0.5
    zero_shot_size_limit: float = 0.5
    sizes_relative: bool = True
    max_iter: int = 5

    def __post_init__(self):
        probs = (self.p_direct, self.p_supervoxel_pair, self.p_edit)
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("branch probabilities must lie in [0, 1]")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError(f"branch probabilities must sum to 1, got {sum(probs)}")
        if not 0 < self.edit_size_min <= self.edit_size_max:
            raise ValueError("edit size bounds must be positive and ordered")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


def _uniform_point(mask: np.ndarray, rng: np.random.Generator) -> Coord:
    coords = np.argwhere(mask)
    pick = coords[rng.integers(len(coords))]
    return tuple(int(c) for c in pick)


def _direct_pair(labels: LabelVolume, source: str, rng) -> TrainingPair:
    present = labels.present_classes()
    class_index = present[int(rng.integers(len(present)))]
    target = labels.class_mask(class_index)
    point = PointPrompt(
        _uniform_point(target.data, rng), True, PromptContext.for_class(class_index)
    )
    return TrainingPair((point,), target, zero_shot=False, source=source)


def _supervoxel_pair(y_s: SupervoxelMap, rng) -> TrainingPair:
    sv_id = 1 + int(rng.integers(y_s.n_segments_actual))
    target = BinaryMask(y_s.labels == sv_id)
    point = PointPrompt(_uniform_point(target.data, rng), True, PromptContext.zero_shot())
    return TrainingPair((point,), target, zero_shot=True, source="supervoxel")


def _edit_pair(
    labels: LabelVolume, y_s: SupervoxelMap, cfg: SamplerConfig, rng
) -> TrainingPair | None:
    present = labels.present_classes()
    class_index = present[int(rng.integers(len(present)))]
    mask = labels.class_mask(class_index).data
    msize = int(mask.sum())
    scale = msize if cfg.sizes_relative else 1.0
    lo, hi = cfg.edit_size_min * scale, cfg.edit_size_max * scale
    zs_limit = cfg.zero_shot_size_limit * scale

    sv = y_s.labels
    sv_sizes = np.bincount(sv.ravel(), minlength=int(sv.max()) + 1)
    size_ok = (sv_sizes >= lo) & (sv_sizes <= hi)
    dilated = ndimage.binary_dilation(mask, structure=structuring_element(26))
    adjacent = np.unique(sv[dilated & ~mask])
    overlap_ids, overlap_counts = np.unique(sv[mask], return_counts=True)

    add_candidates = [int(i) for i in adjacent if size_ok[i]]
    # subtraction must leave part of the mask behind
    sub_candidates = [
        int(i)
        for i, cnt in zip(overlap_ids, overlap_counts)
        if size_ok[i] and cnt < msize
    ]

    subtract = bool(rng.random() < 0.5)
    pool = sub_candidates if subtract else add_candidates
    if not pool:
        subtract = not subtract
        pool = sub_candidates if subtract else add_candidates
    if not pool:
        return None

    sv_id = pool[int(rng.integers(len(pool)))]
    region = sv == sv_id
    target = (mask & ~region) if subtract else (mask | region)
    edit_size = int((target ^ mask).sum())
    zero_shot = edit_size > zs_limit
    context = PromptContext.zero_shot() if zero_shot else PromptContext.for_class(class_index)

    points = [PointPrompt(_uniform_point(target, rng), True, context)]
    if subtract:
        points.append(PointPrompt(_uniform_point(mask & ~target, rng), False, context))
    else:
        added = target & ~mask
        points.append(PointPrompt(_uniform_point(added, rng), True, context))
    return TrainingPair(tuple(points), BinaryMask(target), zero_shot=zero_shot, source="edited")


def sample_pair(
    y: LabelVolume | None,
    y_p: LabelVolume | None,
    y_s: SupervoxelMap | None,
    cfg: SamplerConfig,
    rng: np.random.Generator,
) -> TrainingPair:
    """Draw one training pair from the label/supervoxel sources.

    With probability p_direct the pair is a class mask with one positive
    point. Otherwise either a raw supervoxel becomes a zero-shot pair, or a
    class mask is edited by adding/subtracting an adjacent supervoxel of
    admissible size; edits larger than the zero-shot size limit are flagged
    zero-shot. Branches that cannot run fall back deterministically.
    """
    labels = y if y is not None else y_p
    source = "manual" if y is not None else "pseudo"
    present = labels.present_classes() if labels is not None else []
    has_sv = y_s is not None and y_s.n_segments_actual >= 1
    if not present and not has_sv:
        raise NoSampleError("no label classes and no supervoxels to sample from")

    roll = float(rng.random())
    if roll < cfg.p_direct:
        branch = "direct"
    else:
        rest = cfg.p_supervoxel_pair + cfg.p_edit
        sv_share = cfg.p_supervoxel_pair / rest if rest > 0 else 0.5
        branch = "supervoxel" if rng.random() < sv_share else "edit"

    if branch == "direct" and not present:
        branch = "supervoxel"
    if branch in ("supervoxel", "edit") and not has_sv:
        branch = "direct"

    if branch == "direct":
        return _direct_pair(labels, source, rng)
    if branch == "supervoxel":
        return _supervoxel_pair(y_s, rng)
    if not present:
        return _supervoxel_pair(y_s, rng)
    pair = _edit_pair(labels, y_s, cfg, rng)
    if pair is None:  # no admissible supervoxel; fall back to direct sampling
        return _direct_pair(labels, source, rng)
    return pair


@dataclass
class PointSampler:
    """Value-type sampler bundling its sources, config, and RNG state.

    Build one sampler per label source (one over the manual labels, another
    over the pseudo labels); ``label_kind`` names which source ``y`` is so
    pairs carry the right provenance.
    """

    y: LabelVolume | None
    y_s: SupervoxelMap | None
    cfg: SamplerConfig = field(default_factory=SamplerConfig)
    seed: int = 0
    label_kind: str = "manual"

    def __post_init__(self):
        if self.label_kind not in ("manual", "pseudo"):
            raise ValueError(f"label_kind must be 'manual' or 'pseudo', got {self.label_kind!r}")
        self._rng = np.random.default_rng(self.seed)

    def sample(self) -> TrainingPair:
        if self.label_kind == "manual":
            return sample_pair(self.y, None, self.y_s, self.cfg, self._rng)
        return sample_pair(None, self.y, self.y_s, self.cfg, self._rng)

    def clone_with_seed(self, seed: int) -> "PointSampler":
        return replace(self, seed=seed)


def sample_fp_fn_points(
    pred: BinaryMask,
    gt: BinaryMask,
    rng: np.random.Generator,
    context: PromptContext | None = None,
) -> list[PointPrompt]:
    """One negative point in the false-positive region and one positive in
    the false-negative region; empty regions contribute nothing."""
    if pred.dims != gt.dims:
        raise ValueError(f"mask dims differ: {pred.dims} vs {gt.dims}")
    ctx = context or PromptContext.zero_shot()
    out = []
    fp = pred.data & ~gt.data
    if fp.any():
        out.append(PointPrompt(_uniform_point(fp, rng), False, ctx))
    fn = gt.data & ~pred.data
    if fn.any():
        out.append(PointPrompt(_uniform_point(fn, rng), True, ctx))
    return out


def foreground_center(mask: BinaryMask) -> Coord:
    """Nearest in-mask voxel to the voxel-coordinate centroid."""
    coords = np.argwhere(mask.data)
    if len(coords) == 0:
        raise ValueError("mask is empty")
    centroid = coords.mean(axis=0)
    d2 = ((coords - centroid) ** 2).sum(axis=1)
    return tuple(int(c) for c in coords[int(np.argmin(d2))])


def next_eval_click(
    pred: BinaryMask,
    gt: BinaryMask,
    rng: np.random.Generator,
    first: bool = False,
    context: PromptContext | None = None,
    connectivity: int = 26,
) -> PointPrompt | None:
    """Simulated-annotator click policy.

    The first click lands at the ground-truth foreground center. Afterwards
    the largest false-positive and false-negative components are compared
    and a click is sampled uniformly inside the larger: negative for a
    false positive, positive for a false negative. Returns None once the
    prediction matches the ground truth.
    """
    if pred.dims != gt.dims:
        raise ValueError(f"mask dims differ: {pred.dims} vs {gt.dims}")
    ctx = context or PromptContext.zero_shot()
    if first:
        if not gt.data.any():
            raise ValueError("first click requires a nonempty ground truth")
        return PointPrompt(foreground_center(gt), True, ctx)

    fp = BinaryMask(pred.data & ~gt.data)
    fn = BinaryMask(gt.data & ~pred.data)
    if not fp.data.any() and not fn.data.any():
        return None
    fp_largest = largest_component(connected_components(fp, connectivity))
    fn_largest = largest_component(connected_components(fn, connectivity))
    if fn_largest.count >= fp_largest.count:
        return PointPrompt(_uniform_point(fn_largest.data, rng), True, ctx)
    return PointPrompt(_uniform_point(fp_largest.data, rng), False, ctx)


def export_training_pair(pair: TrainingPair, directory, stem: str = "pair") -> tuple[str, str]:
    """Write a pair as <stem>.nii (uint8 target) + <stem>.json (points) for
    inspection; returns the two paths."""
    from . import nifti

    mask_path = os.path.join(directory, f"{stem}.nii")
    json_path = os.path.join(directory, f"{stem}.json")
    nifti.write_nifti(LabelVolume(pair.target.data.astype(np.uint8)), mask_path)
    doc = {
        "source": pair.source,
        "zero_shot": pair.zero_shot,
        "points": [
            {
                "xyz": list(p.position),
                "polarity": p.polarity,
                "context": p.context.kind,
                "class_index": p.context.class_index,
            }
            for p in pair.points
        ],
    }
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
    return mask_path, json_path


def sample_class_prompts(
    label: LabelVolume,
    label_set: frozenset[int] | set[int],
    max_fg: int = 32,
    max_bg: int = 4,
    rng: np.random.Generator | None = None,
) -> list[tuple[ClassPrompt, BinaryMask]]:
    """Foreground prompts for classes present in the label plus background
    prompts (all-zero targets) for annotated-but-absent classes."""
    if not label_set:
        raise ValueError("label_set must be nonempty")
    if max_fg < 0 or max_bg < 0:
        raise ValueError("prompt limits must be >= 0")
    rng = rng or np.random.default_rng()
    present = sorted(label.present_classes())
    fg_pick = sorted(
        int(c) for c in rng.choice(present, size=min(max_fg, len(present)), replace=False)
    ) if present else []
    bg_pool = sorted(set(int(v) for v in label_set) - set(present))
    bg_pick = sorted(
        int(c) for c in rng.choice(bg_pool, size=min(max_bg, len(bg_pool)), replace=False)
    ) if bg_pool else []
    out: list[tuple[ClassPrompt, BinaryMask]] = []
    for c in fg_pick:
        out.append((ClassPrompt(c), label.class_mask(c)))
    zero = empty_mask(label.dims)
    for c in bg_pick:
        out.append((ClassPrompt(c), zero))
    return out
