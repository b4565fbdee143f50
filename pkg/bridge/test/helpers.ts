/**
 * Test scaffolding: temp dirs and fixture generation through the Python
 * package's public surface (its library for building table files, its CLI
 * for running experiments).  The bridge is only ever exercised the way a
 * real deployment would drive it.
 */

import { execFileSync } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

export const BRIDGE_DIR = dirname(dirname(fileURLToPath(import.meta.url)));
export const MAIN_JS = join(BRIDGE_DIR, "dist", "main.js");

export function tempDir(): string {
  return mkdtempSync(join(tmpdir(), "duet-bridge-"));
}

/** Run a Python snippet against the installed duet package. */
export function python(code: string, args: string[] = []): string {
  return execFileSync("python3", ["-c", code, ...args], {
    encoding: "utf8",
  });
}

/** Run the duet CLI; throws on non-zero exit. */
export function duet(args: string[]): string {
  return execFileSync("duet", args, { encoding: "utf8" });
}

/**
 * Write a small table model with hand-picked scores, one non-ASCII token
 * and embeddings; returns the vocabulary hash computed by the Python side.
 */
export function writeFixtureModel(path: string): string {
  return python(
    `
import sys
import numpy as np
from duet.remote import vocab_hash
from duet.scoring import TableScorer
from duet.textspec import ModelTextSpec, Vocabulary, WhitespaceScheme

spec = ModelTextSpec(
    Vocabulary.from_tokens(["alpha", "beta", "stra\\u00dfe"]),
    WhitespaceScheme(),
    name="fixture",
)
entries = {
    ("src", ()): [-9.0, -8.0, -7.5, -0.5, -1.5, -2.5],
    ("src", (3,)): [-9.0, -0.25, -7.5, -6.0, -1.0, -3.0],
}
embeddings = np.array(
    [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.5, -0.5], [2.0, 0.25], [-1.0, 3.0]]
)
TableScorer(spec, entries, default=-7.0, embeddings=embeddings).save(sys.argv[1])
print(vocab_hash(spec), end="")
`,
    [path],
  ).trim();
}
