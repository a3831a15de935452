"""3D connected-component labeling and component queries.

Component ids are assigned deterministically: components are numbered
1..count by the x-fastest scan position of each component's first voxel,
so two runs on identical input produce identical maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import BinaryMask

CONNECTIVITY_STEPS = {6: 1, 18: 2, 26: 3}


def structuring_element(connectivity: int) -> np.ndarray:
    if connectivity not in CONNECTIVITY_STEPS:
        raise ValueError(f"connectivity must be one of {sorted(CONNECTIVITY_STEPS)}, got {connectivity}")
    return ndimage.generate_binary_structure(3, CONNECTIVITY_STEPS[connectivity])


@dataclass(frozen=True)
class ComponentMap:
    labels: np.ndarray          # int32, 0 = background
    count: int
    sizes: np.ndarray           # sizes[i] = voxel count of component i; sizes[0] = 0
    connectivity: int

    @property
    def dims(self):
        return self.labels.shape

    def mask_of(self, component_id: int) -> BinaryMask:
        if not 1 <= component_id <= self.count:
            raise ValueError(f"component id {component_id} outside 1..{self.count}")
        return BinaryMask(self.labels == component_id)


def _scan_order_remap(raw: np.ndarray, count: int) -> np.ndarray:
    """old-id -> new-id table ordering components by first voxel in x-fastest scan."""
    flat = raw.ravel(order="F")
    idx = np.flatnonzero(flat)
    lab = flat[idx]
    first = np.zeros(count + 1, dtype=np.int64)
    # reversed write: the last assignment per label is its first occurrence
    first[lab[::-1]] = idx[::-1]
    order = np.argsort(first[1:], kind="stable")
    remap = np.zeros(count + 1, dtype=np.int32)
    remap[order + 1] = np.arange(1, count + 1, dtype=np.int32)
    return remap


def relabel_scan_order(raw: np.ndarray, count: int) -> np.ndarray:
    """Renumber labels 1..count by first occurrence in x-fastest scan order."""
    if count == 0:
        return raw.astype(np.int32, copy=True)
    return _scan_order_remap(raw, count)[raw]


def connected_components(mask: BinaryMask, connectivity: int = 26) -> ComponentMap:
    """Label the foreground of ``mask`` under 6/18/26-connectivity."""
    structure = structuring_element(connectivity)
    raw, count = ndimage.label(mask.data, structure=structure)
    count = int(count)
    raw_sizes = np.bincount(raw.ravel(), minlength=count + 1).astype(np.int64)
    if count <= 1:
        labels = raw.astype(np.int32, copy=False)
        sizes = raw_sizes
    else:
        remap = _scan_order_remap(raw, count)
        labels = remap[raw]
        sizes = np.zeros(count + 1, dtype=np.int64)
        sizes[remap] = raw_sizes
    sizes[0] = 0
    return ComponentMap(labels=labels, count=count, sizes=sizes, connectivity=connectivity)


def component_containing(cmap: ComponentMap, p) -> int | None:
    """Component id at voxel ``p``, or None on background."""
    x, y, z = (int(c) for c in p)
    dims = cmap.labels.shape
    if not (0 <= x < dims[0] and 0 <= y < dims[1] and 0 <= z < dims[2]):
        raise ValueError(f"point {(x, y, z)} outside dims {dims}")
    cid = int(cmap.labels[x, y, z])
    return cid if cid > 0 else None


def largest_component(cmap: ComponentMap) -> BinaryMask:
    """Mask of the maximum-size component; ties go to the smallest id."""
    if cmap.count == 0:
        return BinaryMask(np.zeros(cmap.labels.shape, dtype=bool))
    best = int(np.argmax(cmap.sizes[1:])) + 1
    return BinaryMask(cmap.labels == best)


def mask_diff_components(a: BinaryMask, b: BinaryMask, connectivity: int = 26) -> ComponentMap:
    """Components of the set difference a AND NOT b."""
    if a.dims != b.dims:
        raise ValueError(f"mask dims differ: {a.dims} vs {b.dims}")
    return connected_components(BinaryMask(a.data & ~b.data), connectivity)
