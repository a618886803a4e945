/**
 * One HTTP server exposing all three shim models behind the engine's wire
 * protocols:
 *
 *   POST /ground       {image_b64, caption} -> {tokens, boxes, scores}
 *   POST /init         {image_b64, box:[x,y,w,h]} -> {session}
 *   POST /predict      {session, image_b64} -> {box:[x,y,w,h], score}
 *   POST /embed_image  {image_b64} -> {vector}
 *   POST /embed_text   {text} -> {vector}
 *   GET  /info         -> {dim}
 *
 * Malformed payloads get 400; a not-yet-loaded model gets 503. Scores are
 * normalized server-side so clients only ever see [0, 1].
 */

import express, { Express, Request, Response } from "express";
import { z } from "zod";

import { EMBED_DIM, embedImage, embedText } from "./embedder";
import { ground } from "./grounder";
import { RgbImage, decodeBase64Png } from "./png";
import { TemplateTracker } from "./tracker";

export interface ShimConfig {
  /** Sigmoid any alignment score that falls outside [0, 1] (logit guard). */
  normalizeScores?: boolean;
  bodyLimit?: string;
}

const groundRequest = z.object({
  image_b64: z.string().min(1),
  caption: z.string().min(1),
});

const initRequest = z.object({
  image_b64: z.string().min(1),
  box: z.tuple([z.number(), z.number(), z.number(), z.number()]),
});

const predictRequest = z.object({
  session: z.string().min(1),
  image_b64: z.string().min(1),
});

const embedImageRequest = z.object({ image_b64: z.string().min(1) });
const embedTextRequest = z.object({ text: z.string().min(1) });

function sigmoid(x: number): number {
  return 1 / (1 + Math.exp(-x));
}

function normalizeScore(value: number): number {
  if (value >= 0 && value <= 1) return value;
  return sigmoid(value);
}

export function createApp(config: ShimConfig = {}): Express {
  const app = express();
  app.use(express.json({ limit: config.bodyLimit ?? "32mb" }));

  const tracker = new TemplateTracker();
  let ready = false;
  // The classical models need no weights; flip ready at the end of setup so
  // the 503-while-loading path stays honest for heavier drop-ins.
  const normalize = config.normalizeScores ?? true;

  app.use((req: Request, res: Response, next) => {
    if (!ready && req.path !== "/health") {
      res.status(503).json({ error: "models loading" });
      return;
    }
    next();
  });

  function decodeImage(res: Response, b64: string): RgbImage | null {
    try {
      return decodeBase64Png(b64);
    } catch (err) {
      res.status(400).json({ error: `bad image: ${(err as Error).message}` });
      return null;
    }
  }

  app.get("/info", (_req: Request, res: Response) => {
    // Handshake: vector dimension plus the score convention the grounder
    // emits (probabilities means every alignment score is already in [0,1]).
    res.json({ dim: EMBED_DIM, scores: normalize ? "probabilities" : "raw" });
  });

  app.post("/ground", (req: Request, res: Response) => {
    const parsed = groundRequest.safeParse(req.body);
    if (!parsed.success) {
      res.status(400).json({ error: parsed.error.message });
      return;
    }
    const img = decodeImage(res, parsed.data.image_b64);
    if (!img) return;
    const out = ground(img, parsed.data.caption);
    const scores = normalize
      ? out.scores.map((row) => row.map(normalizeScore))
      : out.scores;
    res.json({ tokens: out.tokens, boxes: out.boxes, scores });
  });

  app.post("/init", (req: Request, res: Response) => {
    const parsed = initRequest.safeParse(req.body);
    if (!parsed.success) {
      res.status(400).json({ error: parsed.error.message });
      return;
    }
    const img = decodeImage(res, parsed.data.image_b64);
    if (!img) return;
    const [x, y, w, h] = parsed.data.box;
    try {
      const session = tracker.init(img, { x, y, w, h });
      res.json({ session });
    } catch (err) {
      res.status(400).json({ error: (err as Error).message });
    }
  });

  app.post("/predict", (req: Request, res: Response) => {
    const parsed = predictRequest.safeParse(req.body);
    if (!parsed.success) {
      res.status(400).json({ error: parsed.error.message });
      return;
    }
    if (!tracker.has(parsed.data.session)) {
      res.status(400).json({ error: `unknown session ${parsed.data.session}` });
      return;
    }
    const img = decodeImage(res, parsed.data.image_b64);
    if (!img) return;
    const { box, score } = tracker.predict(parsed.data.session, img);
    res.json({ box: [box.x, box.y, box.w, box.h], score });
  });

  app.post("/embed_image", (req: Request, res: Response) => {
    const parsed = embedImageRequest.safeParse(req.body);
    if (!parsed.success) {
      res.status(400).json({ error: parsed.error.message });
      return;
    }
    const img = decodeImage(res, parsed.data.image_b64);
    if (!img) return;
    res.json({ vector: embedImage(img) });
  });

  app.post("/embed_text", (req: Request, res: Response) => {
    const parsed = embedTextRequest.safeParse(req.body);
    if (!parsed.success) {
      res.status(400).json({ error: parsed.error.message });
      return;
    }
    res.json({ vector: embedText(parsed.data.text) });
  });

  app.get("/health", (_req: Request, res: Response) => {
    res.json({ ready });
  });

  ready = true;
  return app;
}
