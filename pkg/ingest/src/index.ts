export { chunk } from "./chunk.js";
export { canonicalEntity } from "./canonical.js";
export { HashEmbedder, cosineWeight } from "./embed.js";
export { extractTriples, extractionPrompt } from "./extract.js";
export { buildCorpus } from "./graph.js";
export { CannedLLMClient, HttpLLMClient, promptKey, recordCannedResponse } from "./llm.js";
export type {
  EmbeddingKind,
  EmbeddingRecord,
  Embedder,
  ExtractionResult,
  GraphRecord,
  LLMClient,
  Passage,
  RawDocument,
  Triple,
} from "./types.js";
