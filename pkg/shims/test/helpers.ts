import * as fs from "fs";
import * as path from "path";

import { RgbImage, encodeBase64Png } from "../src/png";

export const REPO_ROOT = path.resolve(__dirname, "..", "..");
export const SCHEMAS_DIR = path.join(REPO_ROOT, "schemas");

export function loadJson(p: string): any {
  return JSON.parse(fs.readFileSync(p, "utf-8"));
}

export function loadSchema(name: string): any {
  return loadJson(path.join(SCHEMAS_DIR, `${name}.schema.json`));
}

export function loadFixtures(): any {
  return loadJson(path.join(SCHEMAS_DIR, "fixtures", "conformance_requests.json"));
}

/** Solid background with optional filled rectangles: [x, y, w, h, r, g, b]. */
export function makeImage(
  width: number,
  height: number,
  background: [number, number, number] = [40, 40, 40],
  rects: [number, number, number, number, number, number, number][] = [],
): RgbImage {
  const data = Buffer.alloc(width * height * 3);
  for (let i = 0; i < width * height; i += 1) {
    data[i * 3] = background[0];
    data[i * 3 + 1] = background[1];
    data[i * 3 + 2] = background[2];
  }
  for (const [x, y, w, h, r, g, b] of rects) {
    for (let yy = y; yy < y + h; yy += 1) {
      for (let xx = x; xx < x + w; xx += 1) {
        const i = (yy * width + xx) * 3;
        data[i] = r;
        data[i + 1] = g;
        data[i + 2] = b;
      }
    }
  }
  return { width, height, data };
}

export function asBase64(img: RgbImage): string {
  return encodeBase64Png(img);
}
