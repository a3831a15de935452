import { describe, expect, it } from 'vitest';

import { canvasToVoxel, clampIndex, planeAxes, sliceDims, voxelToCanvas } from '../src/coords.js';
import type { Axis, Dims, Voxel } from '../src/types.js';

const CT_DIMS: Dims = [308, 260, 453]; // typical resampled CT shape

describe('planeAxes / sliceDims', () => {
  it('keeps remaining axes in ascending order', () => {
    expect(planeAxes(0)).toEqual([1, 2]);
    expect(planeAxes(1)).toEqual([0, 2]);
    expect(planeAxes(2)).toEqual([0, 1]);
  });

  it('slice dims follow the plane axes', () => {
    expect(sliceDims(CT_DIMS, 0)).toEqual([260, 453]);
    expect(sliceDims(CT_DIMS, 1)).toEqual([308, 453]);
    expect(sliceDims(CT_DIMS, 2)).toEqual([308, 260]);
  });
});

describe('clampIndex', () => {
  it('clamps a deep-axis index when switching to a shallower axis', () => {
    expect(clampIndex(400, CT_DIMS, 1)).toBe(259);
  });

  it('clamps negatives to zero and keeps valid indices', () => {
    expect(clampIndex(-3, CT_DIMS, 0)).toBe(0);
    expect(clampIndex(100, CT_DIMS, 2)).toBe(100);
  });
});

describe('canvas/voxel round trip', () => {
  const dims: Dims = [20, 30, 40];

  it('is the identity for every axis and zoom', () => {
    for (const axis of [0, 1, 2] as Axis[]) {
      const [u, v] = planeAxes(axis);
      for (const zoom of [1, 2, 3]) {
        for (const pu of [0, 3, dims[u] - 1]) {
          for (const pv of [0, 7, dims[v] - 1]) {
            const voxel: Voxel = [0, 0, 0];
            voxel[axis] = 5;
            voxel[u] = pu;
            voxel[v] = pv;
            const canvas = voxelToCanvas(voxel, dims, axis, 5, zoom)!;
            expect(canvasToVoxel(canvas[0], canvas[1], dims, axis, 5, zoom)).toEqual(voxel);
          }
        }
      }
    }
  });

  it('returns null outside the slice', () => {
    expect(canvasToVoxel(-1, 0, dims, 2, 0, 1)).toBeNull();
    expect(canvasToVoxel(20 * 2, 0, dims, 2, 0, 2)).toBeNull();
  });

  it('axis-2 clicks carry the slice index as z', () => {
    const voxel = canvasToVoxel(10, 12, dims, 2, 7, 1);
    expect(voxel).toEqual([10, 12, 7]);
  });

  it('voxelToCanvas is null for voxels on other slices', () => {
    expect(voxelToCanvas([1, 2, 3], dims, 2, 9, 1)).toBeNull();
  });
});
