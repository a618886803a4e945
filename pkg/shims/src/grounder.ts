/**
 * Blob grounder: open-vocabulary-style phrase grounding over color blobs.
 *
 * Proposals are connected components of saturated, same-colored pixels; a
 * token's alignment with a proposal comes from color-word and shape-word
 * agreement with the blob's statistics. Scores are emitted in [0, 1], so the
 * engine's threshold semantics apply unchanged.
 */

import { ColorName, colorName, pixelAt } from "./image";
import { RgbImage } from "./png";

export interface Blob {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
  area: number;
  color: ColorName;
  fill: number;    // area / box area
  aspect: number;  // w / h
}

export interface GroundingOutput {
  tokens: string[];
  boxes: [number, number, number, number][]; // corners
  scores: number[][];
}

const BACKGROUND: ReadonlySet<string> = new Set(["gray", "black", "white"]);

export function tokenize(caption: string): string[] {
  return caption
    .toLowerCase()
    .split(/[.\s]+/)
    .filter((t) => t.length > 0);
}

/** 4-connected components over same-named saturated colors. */
export function findBlobs(img: RgbImage, minArea = 16): Blob[] {
  const { width, height } = img;
  const names = new Array<string>(width * height);
  for (let y = 0; y < height; y += 1) {
    for (let x = 0; x < width; x += 1) {
      const [r, g, b] = pixelAt(img, x, y);
      names[y * width + x] = colorName(r, g, b);
    }
  }
  const seen = new Uint8Array(width * height);
  const blobs: Blob[] = [];
  const stack: number[] = [];
  for (let start = 0; start < names.length; start += 1) {
    if (seen[start] || BACKGROUND.has(names[start])) continue;
    const color = names[start];
    let area = 0;
    let x0 = width;
    let y0 = height;
    let x1 = -1;
    let y1 = -1;
    stack.push(start);
    seen[start] = 1;
    while (stack.length) {
      const idx = stack.pop()!;
      const x = idx % width;
      const y = (idx / width) | 0;
      area += 1;
      if (x < x0) x0 = x;
      if (y < y0) y0 = y;
      if (x > x1) x1 = x;
      if (y > y1) y1 = y;
      const neighbors = [
        x > 0 ? idx - 1 : -1,
        x + 1 < width ? idx + 1 : -1,
        y > 0 ? idx - width : -1,
        y + 1 < height ? idx + width : -1,
      ];
      for (const n of neighbors) {
        if (n >= 0 && !seen[n] && names[n] === color) {
          seen[n] = 1;
          stack.push(n);
        }
      }
    }
    if (area >= minArea) {
      const w = x1 - x0 + 1;
      const h = y1 - y0 + 1;
      blobs.push({
        x0, y0, x1: x1 + 1, y1: y1 + 1,
        area,
        color: color as ColorName,
        fill: area / (w * h),
        aspect: w / h,
      });
    }
  }
  // Stable order: biggest first, then top-left.
  blobs.sort((a, b) => b.area - a.area || a.y0 - b.y0 || a.x0 - b.x0);
  return blobs;
}

const SHAPE_WORDS: ReadonlySet<string> = new Set(["square", "box", "rectangle", "block"]);
const GENERIC_WORDS: ReadonlySet<string> = new Set(["object", "thing", "blob", "shape", "target"]);
const COLOR_WORDS: ReadonlySet<string> = new Set([
  "red", "orange", "yellow", "green", "cyan", "blue", "magenta",
  "white", "black", "gray", "grey", "purple", "pink",
]);

function normalizeColorWord(word: string): string {
  if (word === "grey") return "gray";
  if (word === "purple" || word === "pink") return "magenta";
  return word;
}

export function tokenBlobScore(token: string, blob: Blob): number {
  if (COLOR_WORDS.has(token)) {
    return normalizeColorWord(token) === blob.color ? 0.9 : 0.02;
  }
  if (SHAPE_WORDS.has(token)) {
    const squarish = blob.aspect > 0.75 && blob.aspect < 1.33;
    const filled = blob.fill > 0.7;
    if (token === "square") return filled && squarish ? 0.85 : 0.1;
    return filled ? 0.75 : 0.1;
  }
  if (GENERIC_WORDS.has(token)) return 0.6;
  return 0.0;
}

export function ground(img: RgbImage, caption: string): GroundingOutput {
  const tokens = tokenize(caption);
  const blobs = findBlobs(img);
  const boxes = blobs.map(
    (b) => [b.x0, b.y0, b.x1, b.y1] as [number, number, number, number]);
  const scores = blobs.map((blob) => tokens.map((t) => tokenBlobScore(t, blob)));
  return { tokens, boxes, scores };
}
