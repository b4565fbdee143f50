import { join } from "node:path";

import { beforeAll, describe, expect, test } from "vitest";

import { TableModel } from "../src/model.js";
import {
  HelloReply,
  ScoreReply,
  EmbeddingReply,
  ErrorReply,
  vocabHash,
} from "../src/protocol.js";
import { Session } from "../src/server.js";
import { tempDir, writeFixtureModel } from "./helpers.js";

let model: TableModel;

beforeAll(() => {
  const path = join(tempDir(), "fixture.table.json");
  writeFixtureModel(path);
  model = TableModel.load(path);
});

function handshake(session: Session): HelloReply {
  const outcome = session.handle({
    v: 1,
    type: "hello",
    client: "test",
    vocab_sha256: null,
  });
  return outcome.reply as HelloReply;
}

describe("handshake", () => {
  test("announces the manifest, hash, and capabilities", () => {
    const session = new Session(model, { name: "unit" });
    const hello = handshake(session);
    expect(hello.type).toBe("hello");
    expect(hello.server).toBe("unit");
    expect(hello.session).toBe(session.id);
    expect(hello.vocab_sha256).toBe(vocabHash(model.spec.vocabulary));
    expect(hello.spec).toEqual(model.spec);
    expect(hello.embeddings).toBe(true);
    expect(hello.deterministic).toBe(true);
  });

  test("hash-only mode withholds the manifest but keeps the hash", () => {
    const hello = handshake(new Session(model, { hashOnly: true }));
    expect(hello.spec).toBeNull();
    expect(hello.vocab_sha256).toBe(vocabHash(model.spec.vocabulary));
  });

  test("a wrong protocol version is refused and ends the connection", () => {
    const session = new Session(model);
    const outcome = session.handle({
      v: 2,
      type: "hello",
      vocab_sha256: null,
    });
    expect((outcome.reply as ErrorReply).type).toBe("error");
    expect((outcome.reply as ErrorReply).message).toMatch(/version/);
    expect(outcome.close).toBe(true);
  });
});

describe("scoring", () => {
  function score(
    session: Session,
    body: Partial<{ source: string; prefix: number[]; top_n: number }>,
    id = 1,
  ) {
    return session.handle({
      v: 1,
      type: "score",
      id,
      session: session.id,
      source: "src",
      prefix: [],
      ...body,
    });
  }

  test("lists every non-BOS score best-first with the floor below", () => {
    const session = new Session(model);
    handshake(session);
    const reply = score(session, {}).reply as ScoreReply;
    expect(reply.type).toBe("score");
    expect(reply.id).toBe(1);
    expect(reply.scores).toEqual([
      [3, -0.5],
      [4, -1.5],
      [5, -2.5],
      [2, -7.5],
      [1, -8.0],
    ]);
    expect(reply.floor).toBe(-12.0);
  });

  test("top_n truncates and the floor tracks the worst listed score", () => {
    const session = new Session(model, { margin: 3.5 });
    handshake(session);
    const reply = score(session, { top_n: 2 }).reply as ScoreReply;
    expect(reply.scores).toEqual([
      [3, -0.5],
      [4, -1.5],
    ]);
    expect(reply.floor).toBe(-5.0);
  });

  test("off-table prefixes serve the default vector", () => {
    const session = new Session(model);
    handshake(session);
    const reply = score(session, { prefix: [4, 4] }).reply as ScoreReply;
    expect(reply.scores.map(([, s]) => s)).toEqual(new Array(5).fill(-7.0));
    // equal scores tie-break by id
    expect(reply.scores.map(([id]) => id)).toEqual([1, 2, 3, 4, 5]);
  });

  test("malformed prefixes and top_n are errors that keep the session", () => {
    const session = new Session(model);
    handshake(session);
    const bad = score(session, { prefix: [0, 3] });
    expect((bad.reply as ErrorReply).type).toBe("error");
    expect(bad.close).toBeUndefined();
    const badTop = score(session, { top_n: 0 }, 2);
    expect((badTop.reply as ErrorReply).message).toMatch(/top_n/);
    const again = score(session, {}, 3);
    expect((again.reply as ScoreReply).type).toBe("score");
  });

  test("a stale session id is refused", () => {
    const session = new Session(model);
    handshake(session);
    const outcome = session.handle({
      v: 1,
      type: "score",
      id: 1,
      session: "someone-else",
      source: "src",
      prefix: [],
    });
    expect((outcome.reply as ErrorReply).message).toMatch(/session/);
  });
});

describe("embeddings and lifecycle", () => {
  test("serves embedding vectors by token id", () => {
    const session = new Session(model);
    handshake(session);
    const outcome = session.handle({
      v: 1,
      type: "embedding",
      id: 1,
      session: session.id,
      token: 5,
    });
    expect((outcome.reply as EmbeddingReply).vector).toEqual([-1.0, 3.0]);
  });

  test("close ends the connection without a reply", () => {
    const session = new Session(model);
    handshake(session);
    const outcome = session.handle({
      v: 1,
      type: "close",
      session: session.id,
    });
    expect(outcome.reply).toBeUndefined();
    expect(outcome.close).toBe(true);
  });

  test("unknown types and bad JSON get error frames, session intact", () => {
    const session = new Session(model);
    handshake(session);
    const unknown = session.handleLine(
      JSON.stringify({ v: 1, type: "poke", id: 9, session: session.id }),
    );
    expect((unknown.reply as ErrorReply).message).toMatch(/unknown message/);
    const garbled = session.handleLine("{not json");
    expect((garbled.reply as ErrorReply).message).toMatch(/bad JSON/);
    expect(garbled.close).toBeUndefined();
    const blank = session.handleLine("");
    expect(blank.reply).toBeUndefined();
  });
});
