/**
 * Entry point: host one table model over stdio (default) or TCP.
 *
 *   duet-bridge --model g.table.json                 # stdio, one session
 *   duet-bridge --model g.table.json --listen 127.0.0.1:9117
 *
 * Stdio mode keeps stdout strictly for protocol frames; diagnostics go to
 * stderr.  TCP mode serves one session per connection.
 */

import { createServer, Socket } from "node:net";
import { createInterface } from "node:readline";
import { parseArgs } from "node:util";

import { TableModel } from "./model.js";
import { Session, SessionOptions } from "./server.js";

function usage(message?: string): never {
  if (message) console.error(`duet-bridge: ${message}`);
  console.error(
    "usage: duet-bridge --model FILE [--listen HOST:PORT] [--margin N]" +
      " [--name NAME] [--hash-only]",
  );
  process.exit(message ? 2 : 0);
}

function wire(
  model: TableModel,
  options: SessionOptions,
  input: NodeJS.ReadableStream,
  write: (frame: string) => void,
  end: () => void,
): void {
  const session = new Session(model, options);
  const reader = createInterface({ input, crlfDelay: Infinity });
  reader.on("line", (line) => {
    const outcome = session.handleLine(line);
    if (outcome.reply) write(JSON.stringify(outcome.reply) + "\n");
    if (outcome.close) {
      reader.close();
      end();
    }
  });
}

function serveTcp(
  model: TableModel,
  options: SessionOptions,
  host: string,
  port: number,
): void {
  const server = createServer((socket: Socket) => {
    socket.on("error", () => socket.destroy());
    wire(
      model,
      options,
      socket,
      (frame) => socket.write(frame),
      () => socket.end(),
    );
  });
  server.listen(port, host, () => {
    const address = server.address();
    const bound = typeof address === "object" && address ? address.port : port;
    console.error(`duet-bridge: listening on ${host}:${bound}`);
  });
}

function main(): void {
  let parsed;
  try {
    parsed = parseArgs({
      options: {
        model: { type: "string" },
        listen: { type: "string" },
        margin: { type: "string", default: "4.0" },
        name: { type: "string", default: "duet-bridge" },
        "hash-only": { type: "boolean", default: false },
        help: { type: "boolean", default: false },
      },
    });
  } catch (error) {
    usage(String(error));
  }
  const values = parsed.values;
  if (values.help) usage();
  if (!values.model) usage("--model is required");
  const margin = Number(values.margin);
  if (!Number.isFinite(margin) || margin < 0) {
    usage(`--margin must be a non-negative number, got ${values.margin}`);
  }

  let model: TableModel;
  try {
    model = TableModel.load(values.model);
  } catch (error) {
    console.error(`duet-bridge: ${error instanceof Error ? error.message : error}`);
    process.exit(1);
  }
  const options: SessionOptions = {
    name: values.name,
    margin,
    hashOnly: values["hash-only"],
  };

  if (values.listen) {
    const colon = values.listen.lastIndexOf(":");
    const host = colon < 0 ? "127.0.0.1" : values.listen.slice(0, colon);
    const port = Number(values.listen.slice(colon + 1));
    if (colon < 0 || !Number.isInteger(port) || port < 0 || port > 65535) {
      usage(`--listen expects HOST:PORT, got ${values.listen}`);
    }
    serveTcp(model, options, host, port);
  } else {
    wire(
      model,
      options,
      process.stdin,
      (frame) => process.stdout.write(frame),
      () => process.exit(0),
    );
  }
}

main();
