/** Pixel math for the slice view: grayscale base, mask tint, markers. */

export interface OverlayColor {
  r: number;
  g: number;
  b: number;
}

export const MASK_COLOR: OverlayColor = { r: 255, g: 90, b: 40 };

/**
 * Alpha-composite a mask tint over a grayscale slice.
 *
 * `gray` holds one byte per pixel, `mask` is 0/1 per pixel (same length),
 * and the result is RGBA. Opacity 0 reproduces the grayscale exactly.
 */
export function compositeSlice(
  gray: Uint8Array | Uint8ClampedArray,
  mask: Uint8Array | null,
  opacity: number,
  color: OverlayColor = MASK_COLOR,
): Uint8ClampedArray {
  if (mask !== null && mask.length !== gray.length) {
    throw new Error(`mask length ${mask.length} != slice length ${gray.length}`);
  }
  const alpha = Math.min(1, Math.max(0, opacity));
  const out = new Uint8ClampedArray(gray.length * 4);
  for (let i = 0; i < gray.length; i++) {
    const g = gray[i];
    let r = g;
    let gg = g;
    let b = g;
    if (mask !== null && mask[i] !== 0 && alpha > 0) {
      r = (1 - alpha) * g + alpha * color.r;
      gg = (1 - alpha) * g + alpha * color.g;
      b = (1 - alpha) * g + alpha * color.b;
    }
    out[i * 4] = r;
    out[i * 4 + 1] = gg;
    out[i * 4 + 2] = b;
    out[i * 4 + 3] = 255;
  }
  return out;
}
