/**
 * Template tracker: normalized cross-correlation search around the last
 * known position. Classical, deterministic, and stateful per session.
 */

import { Rect, clampRect, cropGray, toGray } from "./image";
import { RgbImage } from "./png";

const SEARCH_RADIUS = 32;

interface SessionState {
  template: Float64Array;
  tw: number;
  th: number;
  last: Rect;
}

function meanStd(values: Float64Array): [number, number] {
  let sum = 0;
  for (let i = 0; i < values.length; i += 1) sum += values[i];
  const mean = sum / values.length;
  let varSum = 0;
  for (let i = 0; i < values.length; i += 1) {
    const d = values[i] - mean;
    varSum += d * d;
  }
  return [mean, Math.sqrt(varSum / values.length)];
}

function ncc(a: Float64Array, b: Float64Array): number {
  const [ma, sa] = meanStd(a);
  const [mb, sb] = meanStd(b);
  if (sa === 0 || sb === 0) return sa === sb ? 1 : 0;
  let acc = 0;
  for (let i = 0; i < a.length; i += 1) acc += (a[i] - ma) * (b[i] - mb);
  return acc / (a.length * sa * sb);
}

export class TemplateTracker {
  private sessions = new Map<string, SessionState>();
  private counter = 0;

  init(frame: RgbImage, box: Rect): string {
    const clamped = clampRect(box, frame.width, frame.height);
    if (!clamped) throw new Error("init box lies outside the frame");
    const gray = toGray(frame);
    const template = cropGray(gray, frame.width, clamped);
    this.counter += 1;
    const id = `s${this.counter}`;
    this.sessions.set(id, {
      template, tw: clamped.w, th: clamped.h, last: clamped,
    });
    return id;
  }

  has(session: string): boolean {
    return this.sessions.has(session);
  }

  predict(session: string, frame: RgbImage): { box: Rect; score: number } {
    const state = this.sessions.get(session);
    if (!state) throw new Error(`unknown session ${session}`);
    const gray = toGray(frame);
    const { tw, th } = state;
    const xMin = Math.max(0, state.last.x - SEARCH_RADIUS);
    const xMax = Math.min(frame.width - tw, state.last.x + SEARCH_RADIUS);
    const yMin = Math.max(0, state.last.y - SEARCH_RADIUS);
    const yMax = Math.min(frame.height - th, state.last.y + SEARCH_RADIUS);

    let best = -2;
    let bestX = state.last.x;
    let bestY = state.last.y;
    for (let y = yMin; y <= yMax; y += 1) {
      for (let x = xMin; x <= xMax; x += 1) {
        const patch = cropGray(gray, frame.width, { x, y, w: tw, h: th });
        const score = ncc(state.template, patch);
        if (score > best) {
          best = score;
          bestX = x;
          bestY = y;
        }
      }
    }
    const box = { x: bestX, y: bestY, w: tw, h: th };
    state.last = box;
    const confidence = Math.min(1, Math.max(0, (best + 1) / 2));
    return { box, score: confidence };
  }
}
