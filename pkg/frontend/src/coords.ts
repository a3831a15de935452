/** Axis-aware mapping between canvas pixels, plane coordinates, and voxels.
 *
 * A slice perpendicular to `axis` keeps the two remaining axes in ascending
 * order as its plane axes (u, v). Slice images are `dims[u]` wide and
 * `dims[v]` tall; the canvas scales them by an integer zoom factor.
 */

import type { Axis, Dims, Voxel } from './types.js';

export function planeAxes(axis: Axis): [number, number] {
  switch (axis) {
    case 0: return [1, 2];
    case 1: return [0, 2];
    case 2: return [0, 1];
  }
}

export function sliceDims(dims: Dims, axis: Axis): [number, number] {
  const [u, v] = planeAxes(axis);
  return [dims[u], dims[v]];
}

export function clampIndex(index: number, dims: Dims, axis: Axis): number {
  return Math.min(Math.max(0, Math.trunc(index)), dims[axis] - 1);
}

/** Canvas pixel -> voxel, or null when the pixel falls outside the slice. */
export function canvasToVoxel(
  canvasX: number,
  canvasY: number,
  dims: Dims,
  axis: Axis,
  sliceIndex: number,
  zoom: number,
): Voxel | null {
  const [u, v] = planeAxes(axis);
  const pu = Math.floor(canvasX / zoom);
  const pv = Math.floor(canvasY / zoom);
  if (pu < 0 || pv < 0 || pu >= dims[u] || pv >= dims[v]) return null;
  const voxel: Voxel = [0, 0, 0];
  voxel[axis] = sliceIndex;
  voxel[u] = pu;
  voxel[v] = pv;
  return voxel;
}

/** Center of a voxel on the canvas; null when it is not on this slice. */
export function voxelToCanvas(
  voxel: Voxel,
  dims: Dims,
  axis: Axis,
  sliceIndex: number,
  zoom: number,
): [number, number] | null {
  if (voxel[axis] !== sliceIndex) return null;
  const [u, v] = planeAxes(axis);
  return [(voxel[u] + 0.5) * zoom, (voxel[v] + 0.5) * zoom];
}
