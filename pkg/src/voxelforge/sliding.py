"""Sliding-window inference with weighted patch blending, and the
patch-local click inference path."""

from __future__ import annotations

import itertools
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError
from .grid import BinaryMask, Patch, Volume, crop_patch, inbounds_slices
from .predictors import Predictor
from .prompts import ClassPrompt, PointPrompt

Coord = tuple[int, int, int]


@dataclass(frozen=True)
class BlendKernel:
    """Per-voxel blending weights over a patch; strictly positive so
    overlap sums never vanish."""

    kind: str = "gaussian"
    std_frac: float = 0.125

    def __post_init__(self):
        if self.kind not in ("constant", "gaussian"):
            raise ValueError(f"unknown blend kind {self.kind!r}")
        if self.kind == "gaussian" and self.std_frac <= 0:
            raise ValueError("gaussian blend needs std_frac > 0")

    def weights(self, size: Coord) -> np.ndarray:
        if self.kind == "constant":
            return np.ones(size, dtype=np.float64)
        axes = []
        for n in size:
            center = (n - 1) / 2.0
            sd = self.std_frac * n
            x = np.arange(n, dtype=np.float64)
            axes.append(np.exp(-((x - center) ** 2) / (2.0 * sd * sd)))
        w = axes[0][:, None, None] * axes[1][None, :, None] * axes[2][None, None, :]
        return np.maximum(w, np.finfo(np.float64).tiny)


def grid_origins(dim: int, patch: int, overlap: float) -> list[int]:
    """Patch start positions along one axis; the last patch touches the boundary."""
    if dim <= patch:
        return [0]
    stride = max(1, int(round(patch * (1.0 - overlap))))
    origins = list(range(0, dim - patch + 1, stride))
    if origins[-1] != dim - patch:
        origins.append(dim - patch)
    return origins


def patch_grid(dims: Coord, patch_size: Coord, overlap: float) -> list[Coord]:
    per_axis = [grid_origins(d, p, overlap) for d, p in zip(dims, patch_size)]
    return list(itertools.product(*per_axis))


def _predict(pred: Predictor, patch: Patch, prompt) -> np.ndarray:
    if isinstance(prompt, ClassPrompt):
        prob = pred.auto(patch, prompt)
    elif isinstance(prompt, (list, tuple)) and all(isinstance(p, PointPrompt) for p in prompt):
        prob = pred.interactive(patch, list(prompt))
    else:
        raise ValueError("prompt must be a ClassPrompt or a sequence of PointPrompts")
    prob = np.asarray(prob)
    if prob.shape != patch.size:
        raise ContractError(f"predictor returned shape {prob.shape}, expected {patch.size}")
    if prob.size and (float(prob.min()) < 0.0 or float(prob.max()) > 1.0):
        raise ContractError("predictor probabilities outside [0, 1]")
    return prob


def sliding_window(
    vol: Volume,
    pred: Predictor,
    prompt: ClassPrompt | Sequence[PointPrompt],
    patch_size: Coord = (128, 128, 128),
    overlap: float = 0.25,
    blend: BlendKernel = BlendKernel("gaussian"),
    memory_budget: int | None = None,
    threads: int = 1,
) -> Volume:
    """Tile the volume into overlapping patches, predict each, and blend.

    Patch origins lie on a regular grid with stride patch*(1-overlap); the
    final origin per axis is clamped so the last patch touches the boundary.
    Probabilities accumulate as weight*p and weight sums with a final
    division, so a constant field survives any overlap/blend combination.
    Accumulators spill to disk-backed arrays when they would exceed
    ``memory_budget`` bytes; numeric results are unchanged. Results are
    independent of ``threads``: patches are evaluated concurrently but
    accumulated in grid order.
    """
    if not 0.0 <= overlap < 1.0:
        raise ValueError(f"overlap must be in [0, 1), got {overlap}")
    patch_size = tuple(int(p) for p in patch_size)
    if min(patch_size) < 1:
        raise ValueError("patch_size components must be >= 1")
    dims = vol.dims
    origins = patch_grid(dims, patch_size, overlap)
    weights = blend.weights(patch_size)

    spill_dir = None
    need = 2 * 8 * int(np.prod(dims))
    if memory_budget is not None and need > memory_budget:
        spill_dir = tempfile.mkdtemp(prefix="vf-slide-")
        acc = np.memmap(os.path.join(spill_dir, "acc.f64"), dtype=np.float64, mode="w+", shape=dims)
        wsum = np.memmap(os.path.join(spill_dir, "wsum.f64"), dtype=np.float64, mode="w+", shape=dims)
        acc[:] = 0.0
        wsum[:] = 0.0
    else:
        acc = np.zeros(dims, dtype=np.float64)
        wsum = np.zeros(dims, dtype=np.float64)

    if not getattr(pred, "concurrent_safe", True):
        threads = 1

    def run_one(origin: Coord) -> np.ndarray:
        patch = crop_patch(vol, origin, patch_size)
        return _predict(pred, patch, prompt)

    def accumulate(origin: Coord, prob: np.ndarray):
        dest, win = inbounds_slices(origin, patch_size, dims)
        acc[dest] += prob[win].astype(np.float64) * weights[win]
        wsum[dest] += weights[win]

    if threads <= 1:
        for origin in origins:
            accumulate(origin, run_one(origin))
    else:
        chunk = max(1, threads * 2)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for start in range(0, len(origins), chunk):
                batch = origins[start : start + chunk]
                for origin, prob in zip(batch, pool.map(run_one, batch)):
                    accumulate(origin, prob)

    out = (np.asarray(acc) / np.asarray(wsum)).astype(np.float32)
    if spill_dir is not None:
        del acc, wsum
        for name in ("acc.f64", "wsum.f64"):
            os.unlink(os.path.join(spill_dir, name))
        os.rmdir(spill_dir)
    return Volume(out, spacing=vol.spacing, origin=vol.origin)


def binarize(prob: Volume, threshold: float = 0.5) -> BinaryMask:
    return BinaryMask(prob.data > threshold)


def local_patch_origin(center: Coord, patch_size: Coord, dims: Coord) -> Coord:
    """Start of the patch centered at a click, clamped inside the volume."""
    return tuple(
        int(np.clip(c - p // 2, 0, max(d - p, 0)))
        for c, p, d in zip(center, patch_size, dims)
    )  # type: ignore[return-value]


def point_local_inference(
    vol: Volume,
    points: Sequence[PointPrompt],
    pred: Predictor,
    patch_size: Coord = (128, 128, 128),
    threshold: float = 0.5,
) -> tuple[BinaryMask, Coord]:
    """Run the interactive predictor on one patch centered at the clicks.

    The patch centers on the first positive point (or the first point when
    none is positive) and is clamped to the volume; everything outside the
    patch stays 0, so a click only ever affects its own patch.
    """
    if not points:
        raise ValueError("points must be nonempty")
    dims = vol.dims
    for p in points:
        for c, d in zip(p.position, dims):
            if not 0 <= c < d:
                raise ValueError(f"point {p.position} outside dims {dims}")
    patch_size = tuple(int(p) for p in patch_size)
    anchor = next((p for p in points if p.positive), points[0])
    origin = local_patch_origin(anchor.position, patch_size, dims)
    patch = crop_patch(vol, origin, patch_size)
    prob = _predict(pred, patch, list(points))
    mask = np.zeros(dims, dtype=bool)
    dest, win = inbounds_slices(origin, patch_size, dims)
    mask[dest] = prob[win] > threshold
    return BinaryMask(mask), origin
