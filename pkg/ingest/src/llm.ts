import { createHash } from "node:crypto";
import { readFileSync, existsSync, writeFileSync, mkdirSync } from "node:fs";
import { join } from "node:path";

import type { LLMClient } from "./types.js";

export const API_KEY_ENV = "RAGMUX_INGEST_API_KEY";

export function promptKey(prompt: string): string {
  return createHash("sha256").update(prompt, "utf-8").digest("hex").slice(0, 16);
}

/** Completions-style endpoint client with one retry on transport errors. */
export class HttpLLMClient implements LLMClient {
  constructor(
    readonly baseUrl: string,
    readonly model: string = "default",
    readonly maxAttempts: number = 2,
  ) {}

  async complete(prompt: string): Promise<string> {
    const headers: Record<string, string> = {
      "content-type": "application/json",
    };
    const key = process.env[API_KEY_ENV];
    if (key) {
      headers.authorization = `Bearer ${key}`;
    }
    let lastError: unknown;
    for (let attempt = 0; attempt < this.maxAttempts; attempt++) {
      try {
        const resp = await fetch(this.baseUrl, {
          method: "POST",
          headers,
          body: JSON.stringify({
            model: this.model,
            prompt,
            temperature: 0,
            max_tokens: 800,
          }),
        });
        const body = (await resp.json()) as { choices: { text: string }[] };
        return body.choices[0].text;
      } catch (error) {
        lastError = error;
      }
    }
    throw new Error(`endpoint failed after ${this.maxAttempts} attempts: ${lastError}`);
  }
}

/**
 * Replays recorded responses from a directory of `${promptKey}.json` files
 * holding `{"response": "..."}`. Used by tests and the `--canned` CLI mode.
 */
export class CannedLLMClient implements LLMClient {
  constructor(readonly dir: string) {}

  async complete(prompt: string): Promise<string> {
    const path = join(this.dir, `${promptKey(prompt)}.json`);
    if (!existsSync(path)) {
      throw new Error(`no canned response for prompt key ${promptKey(prompt)}`);
    }
    const payload = JSON.parse(readFileSync(path, "utf-8")) as { response: string };
    return payload.response;
  }
}

/** Helper for fixture authoring: records a response under its prompt key. */
export function recordCannedResponse(dir: string, prompt: string, response: string): string {
  mkdirSync(dir, { recursive: true });
  const path = join(dir, `${promptKey(prompt)}.json`);
  writeFileSync(path, JSON.stringify({ response }, null, 2) + "\n", "utf-8");
  return path;
}
