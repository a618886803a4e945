/** Small RGB image helpers shared by the shim models. */

import { RgbImage } from "./png";

export function pixelAt(img: RgbImage, x: number, y: number): [number, number, number] {
  const i = (y * img.width + x) * 3;
  return [img.data[i], img.data[i + 1], img.data[i + 2]];
}

export function toGray(img: RgbImage): Float64Array {
  const out = new Float64Array(img.width * img.height);
  for (let i = 0; i < out.length; i += 1) {
    const p = i * 3;
    out[i] = 0.299 * img.data[p] + 0.587 * img.data[p + 1] + 0.114 * img.data[p + 2];
  }
  return out;
}

export interface Rect {
  x: number;
  y: number;
  w: number;
  h: number;
}

/** Clamp a rect to image bounds; returns null when nothing remains. */
export function clampRect(r: Rect, width: number, height: number): Rect | null {
  const x0 = Math.max(0, Math.round(r.x));
  const y0 = Math.max(0, Math.round(r.y));
  const x1 = Math.min(width, Math.round(r.x + r.w));
  const y1 = Math.min(height, Math.round(r.y + r.h));
  if (x1 <= x0 || y1 <= y0) return null;
  return { x: x0, y: y0, w: x1 - x0, h: y1 - y0 };
}

export function cropGray(gray: Float64Array, width: number, r: Rect): Float64Array {
  const out = new Float64Array(r.w * r.h);
  for (let y = 0; y < r.h; y += 1) {
    for (let x = 0; x < r.w; x += 1) {
      out[y * r.w + x] = gray[(r.y + y) * width + (r.x + x)];
    }
  }
  return out;
}

/** Named hue buckets used by both the grounder and the text embedder. */
export type ColorName =
  | "red" | "orange" | "yellow" | "green" | "cyan" | "blue" | "magenta"
  | "white" | "black" | "gray";

export const COLOR_NAMES: ColorName[] = [
  "red", "orange", "yellow", "green", "cyan", "blue", "magenta",
  "white", "black", "gray",
];

/** Classify an RGB triple into a coarse named color. */
export function colorName(r: number, g: number, b: number): ColorName {
  const max = Math.max(r, g, b);
  const min = Math.min(r, g, b);
  if (max - min < 36) {
    if (max > 200) return "white";
    if (max < 56) return "black";
    return "gray";
  }
  // Hue in degrees from the RGB maximum.
  let hue: number;
  if (max === r) hue = (60 * (g - b)) / (max - min);
  else if (max === g) hue = 120 + (60 * (b - r)) / (max - min);
  else hue = 240 + (60 * (r - g)) / (max - min);
  if (hue < 0) hue += 360;
  if (hue < 20 || hue >= 330) return "red";
  if (hue < 45) return "orange";
  if (hue < 70) return "yellow";
  if (hue < 160) return "green";
  if (hue < 200) return "cyan";
  if (hue < 260) return "blue";
  return "magenta";
}

/** A representative RGB for each named color (text-embedding anchors). */
export const COLOR_ANCHORS: Record<ColorName, [number, number, number]> = {
  red: [230, 40, 40],
  orange: [240, 150, 40],
  yellow: [230, 220, 40],
  green: [40, 200, 60],
  cyan: [40, 210, 210],
  blue: [40, 70, 230],
  magenta: [220, 40, 210],
  white: [240, 240, 240],
  black: [15, 15, 15],
  gray: [128, 128, 128],
};
