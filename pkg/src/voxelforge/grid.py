"""Volume, mask, and patch containers plus resampling and patch extraction.

All containers index voxels as ``data[x, y, z]`` and treat x as the fastest
axis when data is linearized (file payloads, scan order, RLE).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

Coord = tuple[int, int, int]
Triple = tuple[float, float, float]


def _as_triple(v) -> Triple:
    t = tuple(float(x) for x in v)
    if len(t) != 3:
        raise ValueError(f"expected 3 components, got {len(t)}")
    return t  # type: ignore[return-value]


@dataclass(frozen=True)
class Volume:
    """Dense 3D scalar grid with physical spacing (mm/voxel) and origin (mm)."""

    data: np.ndarray
    spacing: Triple = (1.0, 1.0, 1.0)
    origin: Triple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ValueError(f"volume data must be 3D, got {data.ndim}D")
        if min(data.shape) < 1:
            raise ValueError(f"volume dims must be >= 1, got {data.shape}")
        if not np.isfinite(data).all():
            raise ValueError("volume data contains non-finite values")
        spacing = _as_triple(self.spacing)
        if min(spacing) <= 0:
            raise ValueError(f"spacing must be positive, got {spacing}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", _as_triple(self.origin))

    @property
    def dims(self) -> Coord:
        return self.data.shape  # type: ignore[return-value]


@dataclass(frozen=True)
class BinaryMask:
    """Per-voxel boolean mask; dims must match the volume it annotates."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.dtype != np.bool_:
            data = data.astype(bool)
        if data.ndim != 3:
            raise ValueError(f"mask data must be 3D, got {data.ndim}D")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def dims(self) -> Coord:
        return self.data.shape  # type: ignore[return-value]

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.data))


def empty_mask(dims: Coord) -> BinaryMask:
    return BinaryMask(np.zeros(dims, dtype=bool))


@dataclass(frozen=True)
class LabelVolume:
    """Per-voxel unsigned integer class index; 0 is background.

    ``label_set`` is the set of global indices annotated for this volume.
    When provided, every nonzero voxel value must belong to it.
    """

    data: np.ndarray
    spacing: Triple = (1.0, 1.0, 1.0)
    origin: Triple = (0.0, 0.0, 0.0)
    label_set: frozenset[int] | None = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if not np.issubdtype(data.dtype, np.integer):
            raise ValueError(f"label data must be integer-typed, got {data.dtype}")
        if data.ndim != 3:
            raise ValueError(f"label data must be 3D, got {data.ndim}D")
        if data.size and int(data.min()) < 0:
            raise ValueError("label values must be non-negative")
        if self.label_set is not None:
            label_set = frozenset(int(v) for v in self.label_set)
            present = set(np.unique(data).tolist()) - {0}
            stray = present - label_set
            if stray:
                raise ValueError(f"label values {sorted(stray)} outside declared label_set")
            object.__setattr__(self, "label_set", label_set)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", _as_triple(self.spacing))
        object.__setattr__(self, "origin", _as_triple(self.origin))

    @property
    def dims(self) -> Coord:
        return self.data.shape  # type: ignore[return-value]

    def class_mask(self, index: int) -> BinaryMask:
        return BinaryMask(self.data == int(index))

    def present_classes(self) -> list[int]:
        vals = np.unique(self.data)
        return [int(v) for v in vals if v != 0]


@dataclass(frozen=True)
class Patch:
    """Fixed-size window into a parent grid; out-of-bounds voxels are
    zero-filled and flagged in ``pad_mask``."""

    origin: Coord
    data: np.ndarray
    pad_mask: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        pad = np.asarray(self.pad_mask, dtype=bool)
        if data.shape != pad.shape:
            raise ValueError("patch data and pad_mask shapes differ")
        if min(data.shape) < 1:
            raise ValueError("patch size components must be >= 1")
        if data[pad].size and np.any(data[pad] != 0):
            raise ValueError("padded voxels must be zero")
        data.setflags(write=False)
        pad.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "pad_mask", pad)
        object.__setattr__(self, "origin", tuple(int(c) for c in self.origin))

    @property
    def size(self) -> Coord:
        return self.data.shape  # type: ignore[return-value]


def crop_array(data: np.ndarray, origin, size) -> tuple[np.ndarray, np.ndarray]:
    """Copy a window out of ``data``; returns (window, pad_mask).

    The origin may be negative and the window may extend past the array;
    such voxels are zero-filled and flagged.
    """
    origin = tuple(int(c) for c in origin)
    size = tuple(int(s) for s in size)
    if min(size) < 1:
        raise ValueError(f"patch size must be >= 1 per axis, got {size}")
    out = np.zeros(size, dtype=data.dtype)
    pad = np.ones(size, dtype=bool)
    src_lo = [max(0, o) for o in origin]
    src_hi = [min(d, o + s) for d, o, s in zip(data.shape, origin, size)]
    if all(lo < hi for lo, hi in zip(src_lo, src_hi)):
        dst_lo = [lo - o for lo, o in zip(src_lo, origin)]
        dst_hi = [hi - o for hi, o in zip(src_hi, origin)]
        src = tuple(slice(lo, hi) for lo, hi in zip(src_lo, src_hi))
        dst = tuple(slice(lo, hi) for lo, hi in zip(dst_lo, dst_hi))
        out[dst] = data[src]
        pad[dst] = False
    return out, pad


def crop_patch(vol: Volume | LabelVolume | BinaryMask, origin, size) -> Patch:
    """Extract a zero-padded patch from a volume, label volume, or mask."""
    data, pad = crop_array(vol.data, origin, size)
    return Patch(origin=tuple(int(c) for c in origin), data=data, pad_mask=pad)


def paste_array(dest: np.ndarray, window: np.ndarray, origin) -> None:
    """Write the in-bounds part of ``window`` into ``dest`` at ``origin``."""
    origin = tuple(int(c) for c in origin)
    src_lo = [max(0, -o) for o in origin]
    src_hi = [min(s, d - o) for s, d, o in zip(window.shape, dest.shape, origin)]
    if any(lo >= hi for lo, hi in zip(src_lo, src_hi)):
        return
    dst = tuple(slice(o + lo, o + hi) for o, lo, hi in zip(origin, src_lo, src_hi))
    src = tuple(slice(lo, hi) for lo, hi in zip(src_lo, src_hi))
    dest[dst] = window[src]


def inbounds_slices(origin, size, dims) -> tuple[tuple[slice, ...], tuple[slice, ...]]:
    """(dest_slices, window_slices) for the in-bounds overlap of a window."""
    origin = tuple(int(c) for c in origin)
    lo = [max(0, -o) for o in origin]
    hi = [min(s, d - o) for s, d, o in zip(size, dims, origin)]
    dest = tuple(slice(o + a, o + b) for o, a, b in zip(origin, lo, hi))
    win = tuple(slice(a, b) for a, b in zip(lo, hi))
    return dest, win


def resampled_dims(dims: Coord, spacing: Triple, target_spacing: Triple) -> Coord:
    """Output grid shape for a spacing change: round(dims*spacing/target), min 1."""
    if min(target_spacing) <= 0:
        raise ValueError(f"target spacing must be positive, got {target_spacing}")
    return tuple(
        max(1, int(math.floor(d * s / t + 0.5)))
        for d, s, t in zip(dims, spacing, target_spacing)
    )  # type: ignore[return-value]


def resample(
    vol: Volume | LabelVolume,
    target_spacing,
    mode: str = "trilinear",
) -> Volume | LabelVolume:
    """Resample onto an isotropic-or-not grid with the requested spacing.

    Voxel centers are aligned so the world-space extent is preserved; with
    ``target_spacing == spacing`` the result is the identity. Label volumes
    must use nearest mode so no new label values are introduced.
    """
    target = _as_triple(target_spacing)
    if min(target) <= 0:
        raise ValueError(f"target spacing must be positive, got {target}")
    if mode not in ("trilinear", "nearest"):
        raise ValueError(f"unknown resample mode {mode!r}")
    is_labels = isinstance(vol, LabelVolume)
    if is_labels and mode != "nearest":
        raise ValueError("label volumes require nearest resampling")

    out_dims = resampled_dims(vol.dims, vol.spacing, target)
    grids = [
        (np.arange(n, dtype=np.float64) + 0.5) * (t / s) - 0.5
        for n, t, s in zip(out_dims, target, vol.spacing)
    ]
    coords = np.meshgrid(*grids, indexing="ij")
    order = 0 if mode == "nearest" else 1
    out = ndimage.map_coordinates(vol.data, coords, order=order, mode="nearest")
    new_origin = tuple(
        o - 0.5 * s + 0.5 * t for o, s, t in zip(vol.origin, vol.spacing, target)
    )
    if is_labels:
        return LabelVolume(out, spacing=target, origin=new_origin, label_set=vol.label_set)
    return Volume(out, spacing=target, origin=new_origin)
