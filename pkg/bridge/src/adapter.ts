/**
 * Reference adapter executable: reads BridgeRequests on stdin, answers
 * on stdout, hosts a ReplayLogisticLearner.
 *
 * Fault injection for protocol tests (never set in normal use):
 *   CLEVAL_ADAPTER_CRASH_AFTER=<n>  exit abruptly before answering the
 *                                   n-th request (simulates a crash)
 *   CLEVAL_ADAPTER_NAN=1            report a non-finite accuracy
 */

import * as fs from "fs";
import * as readline from "readline";

import { ReplayLogisticLearner } from "./learner.js";
import {
  BridgeRequest,
  BridgeResponse,
  InlineData,
  PROTOCOL_VERSION,
  TaskData,
  isDataRef,
  parseRequest,
  serializeResponse,
} from "./protocol.js";

const crashAfter = Number(process.env.CLEVAL_ADAPTER_CRASH_AFTER ?? "0");
const reportNan = process.env.CLEVAL_ADAPTER_NAN === "1";

let learner: ReplayLogisticLearner | null = null;
let requestsSeen = 0;

function resolveData(data: TaskData): InlineData {
  if (isDataRef(data)) {
    return JSON.parse(fs.readFileSync(data.path, "utf-8")) as InlineData;
  }
  return data;
}

function handle(req: BridgeRequest): BridgeResponse {
  const payload = req.payload ?? {};
  switch (req.cmd) {
    case "hello":
      return {
        id: req.id,
        ok: true,
        payload: { version: PROTOCOL_VERSION, name: "reference-replay-logistic" },
      };
    case "init":
      learner = new ReplayLogisticLearner({
        numFeatures: payload.num_features as number,
        seed: payload.seed as number,
        hyperparameters: (payload.hyperparameters ?? {}) as Record<string, unknown>,
      });
      return { id: req.id, ok: true, payload: {} };
    case "train_task": {
      if (!learner) {
        return { id: req.id, ok: false, error: "init must precede train_task" };
      }
      const started = Date.now();
      const data = resolveData(payload.train as TaskData);
      learner.trainTask(payload.class_ids as number[], data.features, data.labels);
      return {
        id: req.id,
        ok: true,
        payload: { seconds: (Date.now() - started) / 1000 },
      };
    }
    case "eval_upto": {
      if (!learner) {
        return { id: req.id, ok: false, error: "init must precede eval_upto" };
      }
      const data = resolveData(payload.val as TaskData);
      const accuracy = reportNan ? NaN : learner.evaluate(data.features, data.labels);
      // JSON.stringify renders NaN as null, which is exactly the
      // malformed-accuracy case the driver must reject
      return { id: req.id, ok: true, payload: { accuracy } };
    }
    case "param_count":
      if (!learner) {
        return { id: req.id, ok: false, error: "init must precede param_count" };
      }
      return { id: req.id, ok: true, payload: { count: learner.paramCount() } };
    case "shutdown":
      return { id: req.id, ok: true, payload: {} };
    default:
      return { id: req.id, ok: false, error: `unknown cmd '${req.cmd as string}'` };
  }
}

const rl = readline.createInterface({ input: process.stdin, terminal: false });
rl.on("line", (line) => {
  if (line.trim() === "") {
    return;
  }
  requestsSeen++;
  if (crashAfter > 0 && requestsSeen >= crashAfter) {
    process.exit(13);
  }
  const req = parseRequest(line);
  if (!req) {
    process.stdout.write(
      serializeResponse({ id: -1, ok: false, error: "unparseable request" }),
    );
    return;
  }
  let res: BridgeResponse;
  try {
    res = handle(req);
  } catch (err) {
    res = { id: req.id, ok: false, error: (err as Error).message };
  }
  process.stdout.write(serializeResponse(res));
  if (req.cmd === "shutdown" && res.ok) {
    process.exit(0);
  }
});

rl.on("close", () => process.exit(0));
