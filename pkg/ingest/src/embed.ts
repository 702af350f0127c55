import { createHash } from "node:crypto";

import type { Embedder } from "./types.js";

/**
 * Deterministic text-to-unit-vector map, bit-compatible with the consumer
 * package's offline provider: components come from a SHA-256 stream over
 * `${seed}|${text}|${block}` (8 big-endian uint32 values per digest, each
 * mapped to [-1, 1)), then the vector is L2-normalized.
 */
export class HashEmbedder implements Embedder {
  constructor(
    readonly dim: number,
    readonly seed: number = 0,
  ) {
    if (dim <= 0) {
      throw new Error("dim must be positive");
    }
  }

  private vector(text: string): number[] {
    const parts: number[] = [];
    let block = 0;
    while (parts.length < this.dim) {
      const digest = createHash("sha256")
        .update(`${this.seed}|${text}|${block}`, "utf-8")
        .digest();
      for (let offset = 0; offset + 4 <= digest.length; offset += 4) {
        parts.push(2.0 * (digest.readUInt32BE(offset) / 2 ** 32) - 1.0);
      }
      block += 1;
    }
    const vec = parts.slice(0, this.dim);
    let sumSquares = 0.0;
    for (const x of vec) {
      sumSquares += x * x;
    }
    let norm = Math.sqrt(sumSquares);
    if (norm === 0.0) {
      vec[0] = 1.0;
      norm = 1.0;
    }
    return vec.map((x) => x / norm);
  }

  embed(texts: string[]): number[][] {
    return texts.map((t) => this.vector(t));
  }
}

/** Unit-vector cosine, clamped into [0, 1] for use as an edge weight. */
export function cosineWeight(a: number[], b: number[]): number {
  let dot = 0.0;
  for (let i = 0; i < a.length; i++) {
    dot += a[i] * b[i];
  }
  return Math.min(1.0, Math.max(0.0, dot));
}
