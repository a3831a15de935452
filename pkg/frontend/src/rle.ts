/** Run-length decoding of mask slices and full volumes. */

/**
 * Decode per-row [start, length] runs into a plane buffer of size w*h,
 * indexed as v * w + u (rows iterate the second plane axis).
 */
export function decodeRleRows(
  rle: [number, number][][],
  width: number,
  height: number,
): Uint8Array {
  if (rle.length !== height) {
    throw new Error(`rle has ${rle.length} rows, expected ${height}`);
  }
  const out = new Uint8Array(width * height);
  for (let v = 0; v < height; v++) {
    for (const [start, length] of rle[v]) {
      if (start < 0 || start + length > width) {
        throw new Error(`run [${start},${length}] exceeds row width ${width}`);
      }
      out.fill(1, v * width + start, v * width + start + length);
    }
  }
  return out;
}

/** Decode full-volume [start, length] runs over the x-fastest linearization. */
export function decodeRleFlat(rle: [number, number][], voxels: number): Uint8Array {
  const out = new Uint8Array(voxels);
  for (const [start, length] of rle) {
    if (start < 0 || start + length > voxels) {
      throw new Error(`run [${start},${length}] exceeds volume size ${voxels}`);
    }
    out.fill(1, start, start + length);
  }
  return out;
}
