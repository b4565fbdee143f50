/**
 * Message shapes for the scoring bridge wire protocol, version 1.
 *
 * One JSON object per line over stdio or TCP; see protocol.md at the
 * repository root for the normative description.
 */

import { createHash } from "node:crypto";

export const PROTOCOL_VERSION = 1;

export type SchemeManifest =
  | { type: "whitespace" }
  | { type: "character" }
  | { type: "bpe"; merges: [string, string][]; marker: string };

export interface SpecManifest {
  name: string;
  /** Every token, index = id; the first three are BOS, EOS, UNK. */
  vocabulary: string[];
  scheme: SchemeManifest;
  order: "left-to-right" | "right-to-left";
}

export interface HelloRequest {
  v: number;
  type: "hello";
  client?: string;
  vocab_sha256: string | null;
}

export interface ScoreRequest {
  v: number;
  type: "score";
  id: number;
  session: string;
  source: string;
  prefix: number[];
  top_n?: number;
}

export interface EmbeddingRequest {
  v: number;
  type: "embedding";
  id: number;
  session: string;
  token: number;
}

export interface CloseRequest {
  v: number;
  type: "close";
  session: string;
}

export type Request =
  | HelloRequest
  | ScoreRequest
  | EmbeddingRequest
  | CloseRequest;

export interface HelloReply {
  v: number;
  type: "hello";
  server: string;
  session: string;
  vocab_sha256: string;
  embeddings: boolean;
  deterministic: boolean;
  spec: SpecManifest | null;
}

export interface ScoreReply {
  v: number;
  type: "score";
  id: number;
  scores: [number, number][];
  floor: number;
}

export interface EmbeddingReply {
  v: number;
  type: "embedding";
  id: number;
  vector: number[];
}

export interface ErrorReply {
  v: number;
  type: "error";
  id: number | null;
  message: string;
}

export type Reply = HelloReply | ScoreReply | EmbeddingReply | ErrorReply;

/** SHA-256 over the vocabulary entries joined by \n with a trailing \n. */
export function vocabHash(vocabulary: string[]): string {
  return createHash("sha256")
    .update(vocabulary.join("\n") + "\n", "utf8")
    .digest("hex");
}
