"""Dice metric, click-simulation curves, and dataset-level evaluation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .editing import MergeInput, SegmentationSession, merge_interactive
from .grid import BinaryMask, LabelVolume, Volume, crop_patch, inbounds_slices
from .predictors import Predictor
from .prompts import ClassPrompt, PointPrompt, PromptContext
from .sampling import foreground_center, next_eval_click
from .sliding import BlendKernel, binarize, patch_grid, point_local_inference, sliding_window

Coord = tuple[int, int, int]


def dice(a: BinaryMask, b: BinaryMask) -> float:
    """2|a∩b| / (|a| + |b|); 1.0 when both masks are empty."""
    if a.dims != b.dims:
        raise ValueError(f"mask dims differ: {a.dims} vs {b.dims}")
    total = a.count + b.count
    if total == 0:
        return 1.0
    inter = int(np.count_nonzero(a.data & b.data))
    return 2.0 * inter / total


@dataclass(frozen=True)
class ClickCurve:
    """Dice after each simulated click, including the 0-click baseline."""

    points: tuple[tuple[int, float], ...]

    def __post_init__(self):
        pts = tuple((int(k), float(d)) for k, d in self.points)
        clicks = [k for k, _ in pts]
        if clicks != sorted(set(clicks)) or (pts and pts[0][0] != 0):
            raise ValueError("curve clicks must increase strictly from 0")
        if any(not 0.0 <= d <= 1.0 for _, d in pts):
            raise ValueError("dice values must lie in [0, 1]")
        object.__setattr__(self, "points", pts)

    @property
    def final_dice(self) -> float:
        return self.points[-1][1]

    def to_rows(self, case_id: str = "case", class_name: str = "") -> list[list]:
        return [[case_id, class_name, k, d] for k, d in self.points]


@dataclass
class DiceReport:
    per_class: dict[int, float]
    mean: float
    voxel_counts: dict[int, int] = field(default_factory=dict)
    skipped: list[dict] = field(default_factory=list)
    mode: str = ""
    rows: list[list] = field(default_factory=list)  # per-case [case_id, class, clicks, dice]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "mean": self.mean,
            "per_class": {str(k): v for k, v in sorted(self.per_class.items())},
            "voxel_counts": {str(k): v for k, v in sorted(self.voxel_counts.items())},
            "skipped": self.skipped,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def simulate_session(
    vol: Volume,
    gt: BinaryMask,
    pred: Predictor,
    max_clicks: int,
    rng: np.random.Generator,
    automatic: BinaryMask | None = None,
    patch_size: Coord = (128, 128, 128),
    connectivity: int = 26,
    context: PromptContext | None = None,
) -> ClickCurve:
    """Iteratively click against the ground truth and record the dice curve.

    The first click is the ground-truth foreground center; each later click
    lands in the larger of the largest false-positive/false-negative
    components of the current merged mask. Once the mask matches the ground
    truth the curve is padded with 1.0.
    """
    if not gt.data.any():
        raise ValueError("ground truth must be nonempty")
    if max_clicks < 1:
        raise ValueError("max_clicks must be >= 1")
    ctx = context or PromptContext.zero_shot()
    session = SegmentationSession(
        volume=vol,
        predictor=pred,
        context=ctx,
        automatic=automatic,
        patch_size=patch_size,
        connectivity=connectivity,
    )
    points = [(0, dice(session.current, gt))]
    for k in range(1, max_clicks + 1):
        click = next_eval_click(session.current, gt, rng, first=(k == 1), context=ctx,
                                connectivity=connectivity)
        if click is None:
            points.extend((j, 1.0) for j in range(k, max_clicks + 1))
            break
        session.apply_click(click)
        points.append((k, dice(session.current, gt)))
    return ClickCurve(tuple(points))


@dataclass(frozen=True)
class EvalCase:
    case_id: str
    image: Volume
    label: LabelVolume


def _point_mode_mask(
    vol: Volume,
    gt_class: BinaryMask,
    pred: Predictor,
    patch_size: Coord,
    overlap: float,
    threshold: float,
    context: PromptContext,
) -> BinaryMask:
    """One centered positive click per sliding-window patch that contains
    foreground; per-patch masks are unioned."""
    out = np.zeros(vol.dims, dtype=bool)
    for origin in patch_grid(vol.dims, patch_size, overlap):
        window = crop_patch(gt_class, origin, patch_size)
        if not window.data.any():
            continue
        local_center = foreground_center(BinaryMask(window.data.astype(bool)))
        center = tuple(o + c for o, c in zip(origin, local_center))
        click = PointPrompt(center, True, context)
        prob = pred.interactive(crop_patch(vol, origin, patch_size), [click])
        dest, win = inbounds_slices(origin, patch_size, vol.dims)
        out[dest] |= prob[win] > threshold
    return BinaryMask(out)


def evaluate_dataset(
    cases: list[EvalCase],
    pred,
    classes: list[int],
    mode: str = "auto",
    patch_size: Coord = (128, 128, 128),
    overlap: float = 0.25,
    blend: BlendKernel = BlendKernel("gaussian"),
    threshold: float = 0.5,
    seed: int = 0,
    ambiguous_classes: frozenset[int] = frozenset(),
    threads: int = 1,
) -> DiceReport:
    """Per-class dice over a case list in auto / point / auto_point mode.

    auto: sliding-window class-prompt inference, thresholded.
    point: one centered click per foreground-bearing patch, masks unioned.
    auto_point: the auto mask corrected by one false-positive/false-negative
    click through the merge path.
    Classes absent from a case's labels are skipped and recorded.
    ``pred`` is a Predictor, or a callable ``EvalCase -> Predictor`` for
    predictors bound to per-case state (the oracle).
    """
    if mode not in ("auto", "point", "auto_point"):
        raise ValueError(f"unknown mode {mode!r}")
    if not cases:
        raise ValueError("cases must be nonempty")
    rng = np.random.default_rng(seed)
    scores: dict[int, list[float]] = {c: [] for c in classes}
    voxels: dict[int, int] = {c: 0 for c in classes}
    skipped: list[dict] = []
    rows: list[list] = []
    clicks_used = 0 if mode == "auto" else 1
    factory = pred if callable(pred) and not isinstance(pred, Predictor) else None

    for case in sorted(cases, key=lambda c: c.case_id):
        if factory is not None:
            pred = factory(case)
        for c in classes:
            gt = case.label.class_mask(c)
            if not gt.data.any():
                skipped.append({"case": case.case_id, "class": c})
                continue
            voxels[c] += gt.count
            context = (
                PromptContext("ambiguous", c) if c in ambiguous_classes
                else PromptContext("supported", c)
            )
            if mode == "auto":
                prob = sliding_window(case.image, pred, ClassPrompt(c), patch_size,
                                      overlap, blend, threads=threads)
                mask = binarize(prob, threshold)
            elif mode == "point":
                mask = _point_mode_mask(
                    case.image, gt, pred, patch_size, overlap, threshold, context
                )
            else:
                prob = sliding_window(case.image, pred, ClassPrompt(c), patch_size,
                                      overlap, blend, threads=threads)
                mask = binarize(prob, threshold)
                click = next_eval_click(mask, gt, rng, first=False, context=context)
                if click is not None:
                    interactive, _ = point_local_inference(
                        case.image, [click], pred, patch_size, threshold
                    )
                    mask = merge_interactive(
                        MergeInput(
                            automatic=mask,
                            interactive=interactive,
                            pos_points=(click.position,) if click.positive else (),
                            neg_points=() if click.positive else (click.position,),
                        )
                    )
            score = dice(mask, gt)
            scores[c].append(score)
            rows.append([case.case_id, str(c), clicks_used, score])

    per_class = {c: float(np.mean(v)) for c, v in scores.items() if v}
    mean = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return DiceReport(
        per_class=per_class,
        mean=mean,
        voxel_counts={c: n for c, n in voxels.items() if n},
        skipped=skipped,
        mode=mode,
        rows=rows,
    )


def write_curve_csv(path, rows: list[list]) -> None:
    """case_id,class,clicks,dice rows."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["case_id", "class", "clicks", "dice"])
        writer.writerows(rows)
