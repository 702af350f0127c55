export interface RawDocument {
  id: string;
  title: string;
  text: string;
}

export interface Passage {
  id: string;
  title: string;
  text: string;
}

export type Triple = [subject: string, relation: string, object: string];

export interface ExtractionResult {
  passageId: string;
  entities: string[];
  triples: Triple[];
  /** true when the model reply was unusable after the retry */
  failed: boolean;
}

export type EmbeddingKind = "passage" | "entity" | "fact";

export interface EmbeddingRecord {
  owner_id: string;
  kind: EmbeddingKind;
  vector: number[];
}

export type GraphRecord =
  | { type: "relation"; s: string; r: string; o: string }
  | { type: "mention"; e: string; p: string }
  | { type: "synonym"; a: string; b: string; w: number };

export interface Embedder {
  embed(texts: string[]): number[][];
}

export interface LLMClient {
  complete(prompt: string): Promise<string>;
}
