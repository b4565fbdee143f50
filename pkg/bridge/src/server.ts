/**
 * Protocol state machine for one connection: a handshake, then a strictly
 * ordered request/response loop, then close.  Transport-agnostic — the
 * caller feeds in lines and writes out the returned frames, so the same
 * session logic serves stdio and TCP (and the tests drive it directly).
 */

import { randomUUID } from "node:crypto";

import { TableModel, BOS_ID } from "./model.js";
import {
  PROTOCOL_VERSION,
  Reply,
  Request,
  ScoreRequest,
  EmbeddingRequest,
  vocabHash,
} from "./protocol.js";

export interface SessionOptions {
  /** Server name announced in the handshake. */
  name?: string;
  /** How far below the worst listed score unlisted tokens land. */
  margin?: number;
  /** Send only the vocabulary hash, not the full spec manifest. */
  hashOnly?: boolean;
}

export interface Outcome {
  reply?: Reply;
  /** The connection should end after (optionally) sending the reply. */
  close?: boolean;
}

export class Session {
  readonly id = randomUUID().slice(0, 8);
  private readonly name: string;
  private readonly margin: number;
  private readonly hashOnly: boolean;

  constructor(
    private readonly model: TableModel,
    options: SessionOptions = {},
  ) {
    this.name = options.name ?? "duet-bridge";
    this.margin = options.margin ?? 4.0;
    this.hashOnly = options.hashOnly ?? false;
  }

  /** Handle one line from the peer. */
  handleLine(line: string): Outcome {
    if (line.trim() === "") return {};
    let message: Request;
    try {
      message = JSON.parse(line);
    } catch (error) {
      return this.error(null, `bad JSON: ${error}`);
    }
    return this.handle(message);
  }

  handle(message: Request): Outcome {
    if (message.v !== PROTOCOL_VERSION) {
      return {
        ...this.error(
          "id" in message ? message.id : null,
          `unsupported protocol version ${message.v}`,
        ),
        close: true,
      };
    }
    switch (message.type) {
      case "hello":
        return {
          reply: {
            v: PROTOCOL_VERSION,
            type: "hello",
            server: this.name,
            session: this.id,
            vocab_sha256: vocabHash(this.model.spec.vocabulary),
            embeddings: this.model.embeddings !== null,
            deterministic: true,
            spec: this.hashOnly ? null : this.model.spec,
          },
        };
      case "score":
        return this.score(message);
      case "embedding":
        return this.embedding(message);
      case "close":
        return { close: true };
      default:
        return this.error(
          (message as { id?: number }).id ?? null,
          `unknown message type ${JSON.stringify((message as { type?: string }).type)}`,
        );
    }
  }

  private score(message: ScoreRequest): Outcome {
    const bad = this.checkSession(message.id, message.session);
    if (bad) return bad;
    const size = this.model.vocabularySize;
    if (
      !Array.isArray(message.prefix) ||
      message.prefix.some(
        (id) => !Number.isInteger(id) || id < 0 || id >= size || id === BOS_ID,
      )
    ) {
      return this.error(message.id, "prefix must list emitted token ids");
    }
    const vec = this.model.stepScores(message.source, message.prefix);
    const listed: [number, number][] = [];
    for (let id = 0; id < size; id++) {
      if (id !== BOS_ID && Number.isFinite(vec[id])) {
        listed.push([id, vec[id]]);
      }
    }
    listed.sort((a, b) => b[1] - a[1] || a[0] - b[0]);
    const topN = message.top_n ?? listed.length;
    if (!Number.isInteger(topN) || topN < 1) {
      return this.error(message.id, `top_n must be a positive integer`);
    }
    const kept = listed.slice(0, topN);
    const worst = kept.reduce((m, [, s]) => Math.min(m, s), Infinity);
    return {
      reply: {
        v: PROTOCOL_VERSION,
        type: "score",
        id: message.id,
        scores: kept,
        floor: worst - this.margin,
      },
    };
  }

  private embedding(message: EmbeddingRequest): Outcome {
    const bad = this.checkSession(message.id, message.session);
    if (bad) return bad;
    try {
      return {
        reply: {
          v: PROTOCOL_VERSION,
          type: "embedding",
          id: message.id,
          vector: this.model.embedding(message.token),
        },
      };
    } catch (error) {
      return this.error(message.id, String(error));
    }
  }

  private checkSession(id: number, session: string): Outcome | null {
    if (session !== this.id) {
      return this.error(id, `unknown session ${JSON.stringify(session)}`);
    }
    return null;
  }

  private error(id: number | null, message: string): Outcome {
    return {
      reply: { v: PROTOCOL_VERSION, type: "error", id, message },
    };
  }
}
