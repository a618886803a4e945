/**
 * Histogram embedder: images and texts land in one 32-dim space.
 *
 * Image vector = 3x3x3 RGB histogram (27) + mean RGB (3) + gray spread (1)
 * + saturated-pixel fraction (1). Text vectors are built from the same
 * recipe applied to recognized color words' anchor colors, plus a small
 * deterministic hash component for the remaining words, so "red square"
 * lands near actual red patches under cosine similarity.
 */

import { COLOR_ANCHORS, ColorName } from "./image";
import { RgbImage } from "./png";

export const EMBED_DIM = 32;

function bucket(v: number): number {
  return Math.min(2, (v / 86) | 0); // 0..255 -> 0..2
}

function histogramIndex(r: number, g: number, b: number): number {
  return bucket(r) * 9 + bucket(g) * 3 + bucket(b);
}

export function embedImage(img: RgbImage): number[] {
  const vec = new Array<number>(EMBED_DIM).fill(0);
  const n = img.width * img.height;
  let sumR = 0;
  let sumG = 0;
  let sumB = 0;
  let sumGray = 0;
  let sumGray2 = 0;
  let saturated = 0;
  for (let i = 0; i < n; i += 1) {
    const r = img.data[i * 3];
    const g = img.data[i * 3 + 1];
    const b = img.data[i * 3 + 2];
    vec[histogramIndex(r, g, b)] += 1;
    sumR += r;
    sumG += g;
    sumB += b;
    const gray = (r + g + b) / 3;
    sumGray += gray;
    sumGray2 += gray * gray;
    if (Math.max(r, g, b) - Math.min(r, g, b) >= 36) saturated += 1;
  }
  for (let i = 0; i < 27; i += 1) vec[i] /= n;
  vec[27] = sumR / n / 255;
  vec[28] = sumG / n / 255;
  vec[29] = sumB / n / 255;
  const variance = Math.max(0, sumGray2 / n - (sumGray / n) ** 2);
  vec[30] = Math.sqrt(variance) / 255;
  vec[31] = saturated / n;
  return vec;
}

// Deterministic small-noise generator for words without a color anchor.
function hashWord(word: string): number {
  let h = 2166136261;
  for (let i = 0; i < word.length; i += 1) {
    h ^= word.charCodeAt(i);
    h = Math.imul(h, 16777619);
  }
  return h >>> 0;
}

function anchorVector(color: ColorName): number[] {
  const [r, g, b] = COLOR_ANCHORS[color];
  const vec = new Array<number>(EMBED_DIM).fill(0);
  vec[histogramIndex(r, g, b)] = 1;
  vec[27] = r / 255;
  vec[28] = g / 255;
  vec[29] = b / 255;
  vec[31] = color === "gray" || color === "black" || color === "white" ? 0 : 1;
  return vec;
}

const TEXT_COLOR_ALIASES: Record<string, ColorName> = {
  red: "red", orange: "orange", yellow: "yellow", green: "green",
  cyan: "cyan", blue: "blue", magenta: "magenta", purple: "magenta",
  pink: "magenta", white: "white", black: "black", gray: "gray", grey: "gray",
};

export function embedText(text: string): number[] {
  const words = text.toLowerCase().split(/[^a-z0-9]+/).filter((w) => w);
  const vec = new Array<number>(EMBED_DIM).fill(0);
  let anchored = 0;
  for (const word of words) {
    const color = TEXT_COLOR_ALIASES[word];
    if (color) {
      const anchor = anchorVector(color);
      for (let i = 0; i < EMBED_DIM; i += 1) vec[i] += anchor[i];
      anchored += 1;
    } else {
      // Stable pseudo-random sprinkle keeps distinct texts distinct.
      let state = hashWord(word);
      for (let k = 0; k < 4; k += 1) {
        state = (Math.imul(state, 1664525) + 1013904223) >>> 0;
        vec[state % EMBED_DIM] += 0.05 + (state % 97) / 970;
      }
    }
  }
  if (words.length === 0) vec[31] = 1e-3;
  const scale = anchored > 0 ? 1 / anchored : 1;
  return vec.map((v) => v * scale);
}
