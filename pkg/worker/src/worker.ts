/**
 * Reference external evaluator.
 *
 * Speaks newline-delimited JSON over stdio (default) or a TCP socket
 * (--port N, 0 picks a free port):
 *
 *   -> {"type":"hello","version":1,"space":"macro"|"micro"}
 *   <- {"type":"ready","version":1}
 *   -> {"type":"eval","id":n,"arch":{...},"epochs":e,"channels":c,"stack_n":s}
 *   <- {"type":"result","id":n,"accuracy":a}
 *   -> {"type":"shutdown"}
 *
 * One request is in flight at a time; eval ids must strictly increase.
 * Malformed or unsupported input gets {"type":"error","id":...,"message":...}
 * and the session keeps going. EOF exits cleanly.
 *
 * The default scorer is the deterministic hash stub, identical to the
 * engine-side oracle, so protocol conformance is testable with no ML
 * stack. Plug a real trainer in through the Scorer hook below.
 */

import * as net from "net";
import * as readline from "readline";

import { stubScore } from "./canonical";

export const PROTOCOL_VERSION = 1;

/**
 * Evaluation hook: given the architecture document and the training
 * budget (epochs, channel count, normal-cell stack size), return a
 * validation accuracy in [0, 1].
 *
 * A real worker would build the network described by `arch`, train it
 * for `epochs` epochs with `channels` channels (stacking `stackN` normal
 * cells between reductions in the micro space) while sharing weights
 * across calls, then measure held-out accuracy. For example:
 *
 *   const trainer = new SharedWeightTrainer(dataset);
 *   const scorer: Scorer = (arch, epochs, channels, stackN) =>
 *     trainer.trainAndScore(arch, { epochs, channels, stackN });
 *   serveStdio(scorer);
 */
export type Scorer = (
  arch: unknown,
  epochs: number,
  channels: number,
  stackN: number
) => number;

export const defaultScorer: Scorer = (arch) => stubScore(arch);

type Reply = Record<string, unknown>;

export class WorkerSession {
  private lastId = 0;
  private scorer: Scorer;

  constructor(scorer: Scorer = defaultScorer) {
    this.scorer = scorer;
  }

  /** Handle one input line; returns replies to send plus a shutdown flag. */
  handleLine(line: string): { replies: Reply[]; shutdown: boolean } {
    const trimmed = line.trim();
    if (trimmed === "") {
      return { replies: [], shutdown: false };
    }
    let msg: unknown;
    try {
      msg = JSON.parse(trimmed);
    } catch {
      return {
        replies: [{ type: "error", id: null, message: "malformed JSON line" }],
        shutdown: false,
      };
    }
    if (typeof msg !== "object" || msg === null || Array.isArray(msg)) {
      return {
        replies: [{ type: "error", id: null, message: "message must be a JSON object" }],
        shutdown: false,
      };
    }
    const m = msg as Record<string, unknown>;
    switch (m.type) {
      case "hello":
        if (m.version !== PROTOCOL_VERSION) {
          return {
            replies: [
              {
                type: "error",
                id: null,
                message: `unsupported protocol version ${m.version}`,
              },
            ],
            shutdown: false,
          };
        }
        return {
          replies: [{ type: "ready", version: PROTOCOL_VERSION }],
          shutdown: false,
        };
      case "eval":
        return { replies: [this.handleEval(m)], shutdown: false };
      case "shutdown":
        return { replies: [], shutdown: true };
      default:
        return {
          replies: [
            {
              type: "error",
              id: m.id ?? null,
              message: `unknown message type ${JSON.stringify(m.type)}`,
            },
          ],
          shutdown: false,
        };
    }
  }

  private handleEval(m: Record<string, unknown>): Reply {
    const id = m.id;
    if (typeof id !== "number" || !Number.isInteger(id)) {
      return { type: "error", id: null, message: "eval id must be an integer" };
    }
    if (id <= this.lastId) {
      return {
        type: "error",
        id,
        message: `eval id ${id} is not greater than ${this.lastId}`,
      };
    }
    if (typeof m.arch !== "object" || m.arch === null) {
      return { type: "error", id, message: "eval needs an arch object" };
    }
    for (const field of ["epochs", "channels", "stack_n"]) {
      if (typeof m[field] !== "number") {
        return { type: "error", id, message: `eval needs numeric ${field}` };
      }
    }
    this.lastId = id;
    let accuracy: number;
    try {
      accuracy = this.scorer(
        m.arch,
        m.epochs as number,
        m.channels as number,
        m.stack_n as number
      );
    } catch (err) {
      return { type: "error", id, message: `scorer failed: ${err}` };
    }
    if (!Number.isFinite(accuracy) || accuracy < 0 || accuracy > 1) {
      return { type: "error", id, message: `scorer returned ${accuracy}, not in [0, 1]` };
    }
    return { type: "result", id, accuracy };
  }
}

function pump(
  input: NodeJS.ReadableStream,
  write: (line: string) => void,
  onShutdown: () => void,
  scorer: Scorer
): void {
  const session = new WorkerSession(scorer);
  const rl = readline.createInterface({ input, crlfDelay: Infinity });
  rl.on("line", (line) => {
    const { replies, shutdown } = session.handleLine(line);
    for (const reply of replies) {
      write(JSON.stringify(reply) + "\n");
    }
    if (shutdown) {
      rl.close();
      onShutdown();
    }
  });
}

export function serveStdio(scorer: Scorer = defaultScorer): void {
  pump(
    process.stdin,
    (line) => process.stdout.write(line),
    () => process.exit(0),
    scorer
  );
  process.stdin.on("end", () => process.exit(0));
}

export function serveTcp(port: number, scorer: Scorer = defaultScorer): net.Server {
  const server = net.createServer((socket) => {
    pump(
      socket,
      (line) => socket.write(line),
      () => {
        socket.end();
        server.close(() => process.exit(0));
      },
      scorer
    );
    socket.on("error", () => socket.destroy());
  });
  server.listen(port, "127.0.0.1", () => {
    const addr = server.address() as net.AddressInfo;
    process.stderr.write(`worker: listening on 127.0.0.1:${addr.port}\n`);
  });
  return server;
}

function main(): void {
  const args = process.argv.slice(2);
  const portFlag = args.indexOf("--port");
  if (portFlag >= 0) {
    const port = Number(args[portFlag + 1]);
    if (!Number.isInteger(port) || port < 0) {
      process.stderr.write(`worker: bad --port value ${args[portFlag + 1]}\n`);
      process.exit(2);
    }
    serveTcp(port);
  } else {
    serveStdio();
  }
}

if (require.main === module) {
  main();
}
