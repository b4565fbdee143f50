/**
 * Canonical JSON exactly as the table files' producer computes it before
 * hashing: keys sorted, compact separators, all non-ASCII escaped as
 * \uXXXX, and floating-point fields rendered with a trailing ".0" when
 * their value is integral.  JSON.stringify alone gets the last two wrong,
 * so checksum verification re-serializes through this module.
 *
 * Numbers that parse as integers are emitted as integers; fields known by
 * the file schema to be floats must be wrapped in PyFloat by the caller.
 * Exotic magnitudes (|x| >= 1e16, |x| < 1e-4) can render differently from
 * the producer and are outside what table files contain.
 */

export class PyFloat {
  constructor(readonly value: number) {}
}

export type Canonical =
  | null
  | boolean
  | number
  | string
  | PyFloat
  | Canonical[]
  | { [key: string]: Canonical };

function floatText(x: number): string {
  if (Number.isInteger(x)) {
    return (Object.is(x, -0) ? "-0" : String(x)) + ".0";
  }
  return String(x);
}

function stringText(s: string): string {
  return JSON.stringify(s).replace(
    /[-￿]/g,
    (c) => "\\u" + c.charCodeAt(0).toString(16).padStart(4, "0"),
  );
}

export function canonicalize(value: Canonical): string {
  if (value === null) return "null";
  if (value instanceof PyFloat) return floatText(value.value);
  switch (typeof value) {
    case "boolean":
      return value ? "true" : "false";
    case "number":
      if (!Number.isFinite(value)) {
        throw new Error(`non-finite number ${value} cannot be canonicalized`);
      }
      return String(value);
    case "string":
      return stringText(value);
  }
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalize).join(",") + "]";
  }
  const keys = Object.keys(value).sort();
  const parts = keys.map((k) => stringText(k) + ":" + canonicalize(value[k]));
  return "{" + parts.join(",") + "}";
}
