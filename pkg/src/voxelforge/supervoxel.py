"""Triaxial slice features and 3D SLIC supervoxel partitioning.

A feature volume is built by running a 2D per-slice extractor along all
three anatomical axes and summing the three stacks voxelwise. The feature
volume is then partitioned by a localized k-means in joint feature+space
coordinates (SLIC), followed by a connectivity-enforcement pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np
from scipy import ndimage

from .components import relabel_scan_order, structuring_element
from .errors import ContractError
from .grid import Volume

Coord = tuple[int, int, int]


@runtime_checkable
class SliceFeatureExtractor(Protocol):
    """Maps a 2D slice (h, w) to an (h, w, C) feature map, deterministically."""

    channels: int

    def __call__(self, slice2d: np.ndarray) -> np.ndarray: ...


class IntensityExtractor:
    """C=1 identity: the slice is its own feature."""

    channels = 1

    def __call__(self, slice2d: np.ndarray) -> np.ndarray:
        return np.asarray(slice2d, dtype=np.float32)[..., None]


class GaussPyramidExtractor:
    """C=4 channels: the slice smoothed at stds 0, 1, 2, and 4 pixels."""

    channels = 4
    stds = (0.0, 1.0, 2.0, 4.0)

    def __call__(self, slice2d: np.ndarray) -> np.ndarray:
        s = np.asarray(slice2d, dtype=np.float32)
        chans = [s if std == 0 else ndimage.gaussian_filter(s, std) for std in self.stds]
        return np.stack(chans, axis=-1)


def builtin_extractor(kind: str) -> SliceFeatureExtractor:
    if kind == "intensity":
        return IntensityExtractor()
    if kind == "gauss_pyramid":
        return GaussPyramidExtractor()
    raise ValueError(f"unknown extractor kind {kind!r}")


@dataclass(frozen=True)
class FeatureVolume:
    """C-channel scalar field over a voxel grid, stored as (C, nx, ny, nz)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 4:
            raise ValueError(f"feature data must be (C, nx, ny, nz), got {data.shape}")
        if not np.isfinite(data).all():
            raise ValueError("feature data contains non-finite values")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> Coord:
        return self.data.shape[1:]  # type: ignore[return-value]


@dataclass(frozen=True)
class SupervoxelMap:
    """Full voxel partition into connected supervoxels with 1-based ids."""

    labels: np.ndarray
    n_segments_requested: int
    n_segments_actual: int
    spatial_variance_trace: tuple[float, ...] = ()

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 3 or not np.issubdtype(labels.dtype, np.integer):
            raise ValueError("supervoxel labels must be a 3D integer array")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def dims(self) -> Coord:
        return self.labels.shape  # type: ignore[return-value]


def _check_feature_map(out: np.ndarray, slice_shape, channels: int) -> np.ndarray:
    out = np.asarray(out)
    if out.ndim != 3 or out.shape[:2] != tuple(slice_shape) or out.shape[2] != channels:
        raise ContractError(
            f"extractor returned shape {out.shape}, expected {tuple(slice_shape) + (channels,)}"
        )
    return out.astype(np.float32, copy=False)


def triaxial_features(vol: Volume, ex: SliceFeatureExtractor) -> FeatureVolume:
    """Run the extractor over every slice along each axis and sum the stacks."""
    data = vol.data
    nx, ny, nz = data.shape
    C = int(ex.channels)
    acc = np.zeros((C, nx, ny, nz), dtype=np.float32)
    for i in range(nx):  # sagittal
        f = _check_feature_map(ex(data[i, :, :]), (ny, nz), C)
        acc[:, i, :, :] += np.moveaxis(f, -1, 0)
    for j in range(ny):  # coronal
        f = _check_feature_map(ex(data[:, j, :]), (nx, nz), C)
        acc[:, :, j, :] += np.moveaxis(f, -1, 0)
    for k in range(nz):  # axial
        f = _check_feature_map(ex(data[:, :, k]), (nx, ny), C)
        acc[:, :, :, k] += np.moveaxis(f, -1, 0)
    return FeatureVolume(acc)


def seed_grid(dims: Coord, n_segments: int) -> tuple[np.ndarray, float]:
    """Initial SLIC seed centers (K, 3 float voxel coords) and the interval S.

    S = (N / n_segments)^(1/3). Per-axis seed counts start at
    max(1, floor(dim/S)) and are trimmed (largest axis first) until their
    product is at most n_segments; seeds are spread evenly per axis at
    (j + 0.5) * dim / k - 0.5. K never exceeds n_segments.
    """
    N = int(np.prod(dims))
    if n_segments < 1:
        raise ValueError("n_segments must be >= 1")
    if n_segments > N:
        raise ValueError(f"n_segments={n_segments} exceeds voxel count {N}")
    S = (N / n_segments) ** (1.0 / 3.0)
    counts = [max(1, int(np.floor(d / S))) for d in dims]
    while int(np.prod(counts)) > n_segments:
        axis = int(np.argmax(counts))
        counts[axis] -= 1
    axes = [
        (np.arange(k, dtype=np.float64) + 0.5) * (d / k) - 0.5
        for k, d in zip(counts, dims)
    ]
    grid = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([g.ravel() for g in grid], axis=1)
    return centers, S


def _enforce_connectivity(labels: np.ndarray, min_size: float) -> np.ndarray:
    """Merge disconnected or undersized fragments into adjacent segments.

    Each label's largest 26-connected fragment survives if it meets
    min_size; every other fragment is absorbed by its largest adjacent
    surviving segment. Returns labels renumbered in scan order.
    """
    structure = structuring_element(26)
    comp = np.zeros(labels.shape, dtype=np.int32)
    ncomp = 0
    comp_label = [0]
    for lab, box in enumerate(ndimage.find_objects(labels), start=1):
        if box is None:
            continue
        m = labels[box] == lab
        sub, n = ndimage.label(m, structure=structure)
        comp[box][m] = sub[m] + ncomp
        comp_label.extend([lab] * n)
        ncomp += int(n)
    comp_label = np.asarray(comp_label, dtype=np.int32)
    sizes = np.bincount(comp.ravel(), minlength=ncomp + 1).astype(np.int64)

    flat = comp.ravel(order="F")
    idx = np.flatnonzero(flat)
    first = np.zeros(ncomp + 1, dtype=np.int64)
    first[flat[idx][::-1]] = idx[::-1]

    # main fragment of each label: largest, ties to earliest scan position
    keyed = sorted(
        range(1, ncomp + 1), key=lambda c: (comp_label[c], -sizes[c], first[c])
    )
    main = set()
    seen = set()
    for c in keyed:
        lab = int(comp_label[c])
        if lab not in seen:
            seen.add(lab)
            main.add(c)
    kept = {c for c in main if sizes[c] >= min_size}
    if not kept:
        kept = {min(range(1, ncomp + 1), key=lambda c: (-sizes[c], first[c]))}

    # component adjacency under 26-connectivity
    pairs = set()
    offsets = [
        (dx, dy, dz)
        for dx in (0, 1)
        for dy in (-1, 0, 1)
        for dz in (-1, 0, 1)
        if (dx, dy, dz) > (0, 0, 0)
    ]
    for dx, dy, dz in offsets:
        sl_a = tuple(
            slice(max(0, -o), min(s, s - o)) for o, s in zip((dx, dy, dz), comp.shape)
        )
        sl_b = tuple(
            slice(max(0, o), min(s, s + o)) for o, s in zip((dx, dy, dz), comp.shape)
        )
        a = comp[sl_a].ravel()
        b = comp[sl_b].ravel()
        diff = a != b
        if not diff.any():
            continue
        codes = np.unique(a[diff].astype(np.int64) * (ncomp + 1) + b[diff])
        for code in codes:
            u, v = divmod(int(code), ncomp + 1)
            pairs.add((u, v))
            pairs.add((v, u))
    neighbors: dict[int, list[int]] = {c: [] for c in range(1, ncomp + 1)}
    for u, v in pairs:
        neighbors[u].append(v)

    seg_of = np.zeros(ncomp + 1, dtype=np.int32)
    seg_size = np.zeros(ncomp + 1, dtype=np.int64)
    for c in kept:
        seg_of[c] = c
        seg_size[c] = sizes[c]
    pending = sorted((c for c in range(1, ncomp + 1) if c not in kept), key=lambda c: first[c])
    while pending:
        deferred = []
        for c in pending:
            targets = {int(seg_of[nb]) for nb in neighbors[c] if seg_of[nb] != 0}
            if not targets:
                deferred.append(c)
                continue
            tgt = max(targets, key=lambda t: (seg_size[t], -t))
            seg_of[c] = tgt
            seg_size[tgt] += sizes[c]
        if len(deferred) == len(pending):
            # isolated from every kept segment (cannot happen on a connected
            # grid with at least one kept segment); absorb into the largest
            tgt = max(kept, key=lambda t: (seg_size[t], -t))
            seg_of[deferred[0]] = tgt
            seg_size[tgt] += sizes[deferred[0]]
            deferred = deferred[1:]
        pending = deferred

    merged = seg_of[comp]
    uniq = np.unique(merged)  # no zeros: every component was assigned
    lut = np.zeros(int(uniq.max()) + 1, dtype=np.int32)
    lut[uniq] = np.arange(1, len(uniq) + 1, dtype=np.int32)
    return relabel_scan_order(lut[merged], len(uniq))


def slic3d(
    features: FeatureVolume,
    n_segments: int = 100,
    compactness: float = 0.1,
    sigma: float = 3.0,
    max_iter: int = 10,
    min_size_factor: float = 0.25,
) -> SupervoxelMap:
    """Partition a feature volume into compact connected supervoxels.

    Channels are first smoothed with a Gaussian of std ``sigma`` voxels.
    Seeds start on the regular grid from :func:`seed_grid`; each iteration
    assigns voxels within a 2S-radius window of each seed by minimizing

        d = d_feat + (m / S) * d_space

    with Euclidean distances in feature space and voxel coordinates, where
    m = compactness * (feature value range). Cluster centers then move to
    their assigned means. A final pass merges disconnected or undersized
    fragments (below min_size_factor * S^3) into adjacent segments, so every
    output id is one 26-connected region. Fully deterministic.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    dims = features.dims
    centers, S = seed_grid(dims, n_segments)
    K = centers.shape[0]

    F = features.data.astype(np.float64)
    if sigma > 0:
        F = np.stack([ndimage.gaussian_filter(ch, sigma) for ch in F])
    feat_range = float(F.max() - F.min())
    m = compactness * (feat_range if feat_range > 0 else 1.0)
    ratio = m / S

    idx_round = np.clip(np.floor(centers + 0.5).astype(int), 0, np.asarray(dims) - 1)
    cfeat = F[:, idx_round[:, 0], idx_round[:, 1], idx_round[:, 2]].T.copy()  # (K, C)

    coords = [np.arange(d, dtype=np.float64) for d in dims]
    radius = 2.0 * S
    labels = np.zeros(dims, dtype=np.int32)
    trace = []
    for _ in range(max_iter):
        dist = np.full(dims, np.inf)
        labels.fill(0)
        for k in range(K):
            lo = [max(0, int(np.ceil(c - radius))) for c in centers[k]]
            hi = [min(d, int(np.floor(c + radius)) + 1) for c, d in zip(centers[k], dims)]
            if any(a >= b for a, b in zip(lo, hi)):
                continue
            win = tuple(slice(a, b) for a, b in zip(lo, hi))
            df = np.zeros(tuple(b - a for a, b in zip(lo, hi)))
            for c in range(F.shape[0]):
                df += (F[(c,) + win] - cfeat[k, c]) ** 2
            dx = coords[0][win[0]] - centers[k, 0]
            dy = coords[1][win[1]] - centers[k, 1]
            dz = coords[2][win[2]] - centers[k, 2]
            ds = dx[:, None, None] ** 2 + dy[None, :, None] ** 2 + dz[None, None, :] ** 2
            d = np.sqrt(df) + ratio * np.sqrt(ds)
            better = d < dist[win]
            dist[win][better] = d[better]
            labels[win][better] = k + 1
        unassigned = labels == 0
        if unassigned.any():
            pos = np.argwhere(unassigned).astype(np.float64)
            fvals = F[:, unassigned].T
            best_d = np.full(len(pos), np.inf)
            best_k = np.zeros(len(pos), dtype=np.int32)
            for k in range(K):
                df = np.sum((fvals - cfeat[k]) ** 2, axis=1)
                ds = np.sum((pos - centers[k]) ** 2, axis=1)
                d = np.sqrt(df) + ratio * np.sqrt(ds)
                upd = d < best_d
                best_d[upd] = d[upd]
                best_k[upd] = k + 1
            labels[unassigned] = best_k

        flat = labels.ravel()
        counts = np.bincount(flat, minlength=K + 1).astype(np.float64)
        nz = counts[1:] > 0
        new_centers = centers.copy()
        shapes = [(-1, 1, 1), (1, -1, 1), (1, 1, -1)]
        var = 0.0
        for a in range(3):
            axis_coord = np.broadcast_to(
                np.arange(dims[a], dtype=np.float64).reshape(shapes[a]), dims
            ).ravel()
            s = np.bincount(flat, weights=axis_coord, minlength=K + 1)
            new_centers[nz, a] = s[1:][nz] / counts[1:][nz]
            var += float(np.sum((axis_coord - new_centers[flat - 1, a]) ** 2))
        for c in range(F.shape[0]):
            s = np.bincount(flat, weights=F[c].ravel(), minlength=K + 1)
            cfeat[nz, c] = s[1:][nz] / counts[1:][nz]
        centers = new_centers
        trace.append(var)

    min_size = min_size_factor * S**3
    final = _enforce_connectivity(labels, min_size)
    n_actual = int(final.max())
    return SupervoxelMap(
        labels=final,
        n_segments_requested=n_segments,
        n_segments_actual=n_actual,
        spatial_variance_trace=tuple(trace),
    )
