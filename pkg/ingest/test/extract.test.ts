import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { extractTriples, extractionPrompt } from "../src/extract.js";
import { CannedLLMClient } from "../src/llm.js";
import type { LLMClient } from "../src/types.js";

const here = dirname(fileURLToPath(import.meta.url));
const canned = new CannedLLMClient(join(here, "..", "fixtures", "canned"));

class ScriptedLLM implements LLMClient {
  calls = 0;

  constructor(private readonly replies: string[]) {}

  async complete(_prompt: string): Promise<string> {
    const reply = this.replies[Math.min(this.calls, this.replies.length - 1)];
    this.calls += 1;
    return reply;
  }
}

const superstorePassage = {
  id: "doc2#0",
  title: "Superstore",
  text:
    "Superstore is an American sitcom that premiered on NBC. Superstore was " +
    "created by Justin Spitzer. Johnny Pemberton plays Bo Thompson in the series.",
};

describe("extractTriples", () => {
  it("returns empty results for an empty passage list", async () => {
    expect(await extractTriples([], canned)).toEqual([]);
  });

  it("replays the canned fixture into the exact golden extraction", async () => {
    const [result] = await extractTriples([superstorePassage], canned);
    expect(result).toEqual({
      passageId: "doc2#0",
      entities: ["bo thompson", "johnny pemberton", "justin spitzer", "nbc", "superstore"],
      triples: [
        ["superstore", "created by", "justin spitzer"],
        ["johnny pemberton", "plays", "bo thompson"],
        ["superstore", "premiered on", "nbc"],
      ],
      failed: false,
    });
  });

  it("canonicalizes entities and folds triple endpoints into the list", async () => {
    const llm = new ScriptedLLM([
      JSON.stringify({
        entities: ["  Dave   KOZ "],
        triples: [["Dave Koz", "recorded", "Hello Tomorrow"]],
      }),
    ]);
    const [result] = await extractTriples(
      [{ id: "p#0", title: "t", text: "x" }],
      llm,
    );
    expect(result.entities).toEqual(["dave koz", "hello tomorrow"]);
  });

  it("retries a malformed reply once, then flags an empty extraction", async () => {
    const llm = new ScriptedLLM(["not json at all"]);
    const [result] = await extractTriples(
      [{ id: "p#0", title: "t", text: "x" }],
      llm,
    );
    expect(llm.calls).toBe(2);
    expect(result).toEqual({ passageId: "p#0", entities: [], triples: [], failed: true });
  });

  it("accepts a well-formed reply on the retry", async () => {
    const llm = new ScriptedLLM([
      "garbled",
      JSON.stringify({ entities: ["A"], triples: [] }),
    ]);
    const [result] = await extractTriples(
      [{ id: "p#0", title: "t", text: "x" }],
      llm,
    );
    expect(llm.calls).toBe(2);
    expect(result.failed).toBe(false);
    expect(result.entities).toEqual(["a"]);
  });

  it("builds one prompt per passage containing its text", () => {
    const prompt = extractionPrompt(superstorePassage);
    expect(prompt).toContain(superstorePassage.text);
    expect(prompt).toContain('{"entities"');
  });
});
