#!/usr/bin/env node
import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { chunk } from "./chunk.js";
import { HashEmbedder } from "./embed.js";
import { extractTriples } from "./extract.js";
import { buildCorpus } from "./graph.js";
import { CannedLLMClient, HttpLLMClient } from "./llm.js";
import type { LLMClient, RawDocument } from "./types.js";

function parseArgs(argv: string[]): { command: string; options: Map<string, string> } {
  const [command, ...rest] = argv;
  const options = new Map<string, string>();
  for (let i = 0; i < rest.length; i += 2) {
    const flag = rest[i];
    if (!flag.startsWith("--") || i + 1 >= rest.length) {
      throw new Error(`bad argument: ${flag}`);
    }
    options.set(flag.slice(2), rest[i + 1]);
  }
  return { command: command ?? "", options };
}

function readRawDocuments(path: string): RawDocument[] {
  const docs: RawDocument[] = [];
  const seen = new Set<string>();
  for (const line of readFileSync(path, "utf-8").split("\n")) {
    if (!line.trim()) {
      continue;
    }
    const record = JSON.parse(line) as RawDocument;
    if (typeof record.id !== "string" || typeof record.text !== "string" || !record.text) {
      throw new Error(`bad raw document record: ${line.slice(0, 80)}`);
    }
    if (seen.has(record.id)) {
      throw new Error(`duplicate document id ${record.id}`);
    }
    seen.add(record.id);
    docs.push({ id: record.id, title: record.title ?? "", text: record.text });
  }
  return docs;
}

function usage(): never {
  process.stderr.write(
    [
      "usage:",
      "  cli.js chunk --raw docs.jsonl --out passages.jsonl [--max-chars 600] [--overlap 100]",
      "  cli.js build --raw docs.jsonl --out DIR (--canned DIR | --endpoint URL)",
      "         [--max-chars 600] [--overlap 100] [--synonym-threshold 0.8]",
      "         [--dim 8] [--seed 13] [--model default]",
      "",
    ].join("\n"),
  );
  process.exit(2);
}

async function main(): Promise<void> {
  const { command, options } = parseArgs(process.argv.slice(2));
  const maxChars = Number(options.get("max-chars") ?? "600");
  const overlap = Number(options.get("overlap") ?? "100");

  if (command === "chunk") {
    const raw = options.get("raw");
    const out = options.get("out");
    if (!raw || !out) {
      usage();
    }
    const passages = chunk(readRawDocuments(raw), maxChars, overlap);
    writeFileSync(
      out,
      passages.map((p) => JSON.stringify(p)).join("\n") + (passages.length ? "\n" : ""),
      "utf-8",
    );
    process.stdout.write(`wrote ${passages.length} passages to ${out}\n`);
    return;
  }

  if (command === "build") {
    const raw = options.get("raw");
    const out = options.get("out");
    if (!raw || !out) {
      usage();
    }
    let client: LLMClient;
    if (options.has("canned")) {
      client = new CannedLLMClient(options.get("canned")!);
    } else if (options.has("endpoint")) {
      client = new HttpLLMClient(options.get("endpoint")!, options.get("model") ?? "default");
    } else {
      usage();
    }
    const embedder = new HashEmbedder(
      Number(options.get("dim") ?? "8"),
      Number(options.get("seed") ?? "13"),
    );
    const threshold = Number(options.get("synonym-threshold") ?? "0.8");

    const passages = chunk(readRawDocuments(raw), maxChars, overlap);
    const extractions = await extractTriples(passages, client);
    const failed = extractions.filter((e) => e.failed).length;
    const files = buildCorpus(passages, extractions, embedder, threshold);
    mkdirSync(out, { recursive: true });
    writeFileSync(join(out, "passages.jsonl"), files.passages, "utf-8");
    writeFileSync(join(out, "embeddings.jsonl"), files.embeddings, "utf-8");
    writeFileSync(join(out, "graph.jsonl"), files.graph, "utf-8");
    process.stdout.write(
      `wrote corpus (${passages.length} passages, ${failed} failed extractions) to ${out}\n`,
    );
    return;
  }

  usage();
}

main().catch((error) => {
  process.stderr.write(`${error}\n`);
  process.exit(1);
});
