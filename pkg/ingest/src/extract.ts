import { canonicalEntity } from "./canonical.js";
import type { ExtractionResult, LLMClient, Passage, Triple } from "./types.js";

export function extractionPrompt(passage: Passage): string {
  return [
    "Extract the named entities and the relational triples stated in the passage.",
    "Reply with JSON only, exactly in the shape",
    '{"entities": ["..."], "triples": [["subject", "relation", "object"], ...]}.',
    "Subjects and objects must be entities from the passage.",
    "",
    `Title: ${passage.title}`,
    `Passage: ${passage.text}`,
  ].join("\n");
}

function parseReply(reply: string): { entities: string[]; triples: Triple[] } | null {
  let parsed: unknown;
  try {
    parsed = JSON.parse(reply);
  } catch {
    return null;
  }
  if (typeof parsed !== "object" || parsed === null) {
    return null;
  }
  const record = parsed as { entities?: unknown; triples?: unknown };
  if (!Array.isArray(record.entities) || !Array.isArray(record.triples)) {
    return null;
  }
  if (!record.entities.every((e) => typeof e === "string")) {
    return null;
  }
  const triples: Triple[] = [];
  for (const raw of record.triples) {
    if (
      !Array.isArray(raw) ||
      raw.length !== 3 ||
      !raw.every((x) => typeof x === "string")
    ) {
      return null;
    }
    triples.push([raw[0], raw[1], raw[2]]);
  }
  return { entities: record.entities as string[], triples };
}

/**
 * One schema-constrained extraction call per passage; a malformed reply is
 * retried once and then recorded as an empty extraction with `failed` set.
 * Entities are canonicalized and triple endpoints are folded into the
 * entity list so every triple's subject and object appear there.
 */
export async function extractTriples(
  passages: Passage[],
  client: LLMClient,
): Promise<ExtractionResult[]> {
  const results: ExtractionResult[] = [];
  for (const passage of passages) {
    const prompt = extractionPrompt(passage);
    let parsed = parseReply(await client.complete(prompt));
    if (parsed === null) {
      parsed = parseReply(await client.complete(prompt));
    }
    if (parsed === null) {
      results.push({ passageId: passage.id, entities: [], triples: [], failed: true });
      continue;
    }
    const entities = new Set<string>(parsed.entities.map(canonicalEntity));
    const triples: Triple[] = parsed.triples.map(([s, r, o]) => {
      const subject = canonicalEntity(s);
      const object = canonicalEntity(o);
      entities.add(subject);
      entities.add(object);
      return [subject, r, object];
    });
    results.push({
      passageId: passage.id,
      entities: [...entities].sort(),
      triples,
      failed: false,
    });
  }
  return results;
}
