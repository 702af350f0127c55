import type { Passage, RawDocument } from "./types.js";

/**
 * Deterministic sliding-window chunking with stable ids `${docId}#${index}`.
 *
 * Windows are at most maxChars long and consecutive windows share
 * overlapChars of text. Where a sentence ends inside the tail of a window,
 * the cut snaps back to the sentence boundary so chunks tend to end on
 * complete sentences.
 */
export function chunk(
  documents: RawDocument[],
  maxChars: number,
  overlapChars: number,
): Passage[] {
  if (!(maxChars > overlapChars && overlapChars >= 0)) {
    throw new Error("need maxChars > overlapChars >= 0");
  }
  const passages: Passage[] = [];
  for (const doc of documents) {
    if (!doc.text) {
      throw new Error(`document ${doc.id} is empty`);
    }
    let index = 0;
    let start = 0;
    while (start < doc.text.length) {
      let end = Math.min(start + maxChars, doc.text.length);
      if (end < doc.text.length) {
        const cut = lastSentenceEnd(doc.text, start, end);
        if (cut > start) {
          end = cut;
        }
      }
      passages.push({
        id: `${doc.id}#${index}`,
        title: doc.title,
        text: doc.text.slice(start, end),
      });
      index += 1;
      if (end >= doc.text.length) {
        break;
      }
      // a snapped window can be shorter than the overlap; always advance
      start = Math.max(end - overlapChars, start + 1);
    }
  }
  return passages;
}

/** Position just after the last '.', '!' or '?' (plus one space if present)
 * in text[from..to); returns -1 when none lands in the window. */
function lastSentenceEnd(text: string, from: number, to: number): number {
  for (let i = to - 1; i > from; i--) {
    const ch = text[i];
    if (ch === "." || ch === "!" || ch === "?") {
      return i + 1 < to && text[i + 1] === " " ? i + 2 : i + 1;
    }
  }
  return -1;
}
