/**
 * Harness-side driver: spawns an adapter process, runs one full CL trial
 * over the wire (init, train_task per task, eval_upto per prefix,
 * param_count, shutdown), and emits a run record identical in shape to
 * the harness's native ones.
 *
 * Any adapter failure — crash, timeout, protocol error, non-finite
 * accuracy — produces a diverged record with a diagnostic instead of an
 * exception, and never hangs: every request carries a timeout.
 */

import { spawn, ChildProcessWithoutNullStreams } from "child_process";
import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import * as readline from "readline";

import {
  BridgeResponse,
  InlineData,
  PROTOCOL_VERSION,
  TaskData,
  parseResponse,
  serializeRequest,
} from "./protocol.js";

export const DEFAULT_REQUEST_TIMEOUT_MS = 600_000;
export const DEFAULT_INLINE_LIMIT = 10_000; // rows; larger tasks go by file reference

export interface TaskSpec {
  classIds: number[];
  train: InlineData;
  val: InlineData;
}

export interface TrialSpec {
  algorithm: string;
  phase: "tuning" | "evaluation";
  r: number;
  s: number;
  assignment: Record<string, unknown>;
  trialSeed: number;
  tasks: TaskSpec[];
}

export interface DriverOptions {
  requestTimeoutMs?: number;
  inlineLimit?: number;
  env?: Record<string, string>;
}

/** Mirrors the harness's JSONL record schema (schemas/run_record.schema.json). */
export interface RunRecord {
  schema_version: 1;
  algorithm: string;
  phase: "tuning" | "evaluation";
  r: number;
  s: number;
  assignment: Record<string, unknown>;
  trial_seed: number;
  acc_series: number[];
  acc: number;
  avg_acc: number;
  status: "healthy" | "diverged";
  diverged_task: number | null;
  param_counts: number[];
  diagnostic: string | null;
  timing: Record<string, number>;
}

class AdapterClient {
  private readonly child: ChildProcessWithoutNullStreams;
  private readonly timeoutMs: number;
  private nextId = 1;
  private exited = false;
  private exitInfo = "";
  private pending = new Map<
    number,
    { resolve: (res: BridgeResponse) => void; reject: (err: Error) => void; timer: NodeJS.Timeout }
  >();

  constructor(command: string[], timeoutMs: number, env?: Record<string, string>) {
    this.timeoutMs = timeoutMs;
    this.child = spawn(command[0], command.slice(1), {
      stdio: ["pipe", "pipe", "pipe"],
      env: { ...process.env, ...env },
    });
    const rl = readline.createInterface({ input: this.child.stdout, terminal: false });
    rl.on("line", (line) => this.onLine(line));
    this.child.on("error", (err) => this.failAll(`spawn failure: ${err.message}`));
    this.child.on("exit", (code, signal) => {
      this.exited = true;
      this.exitInfo = `adapter exited (code=${code}, signal=${signal})`;
      this.failAll(this.exitInfo);
    });
  }

  private onLine(line: string): void {
    const res = parseResponse(line);
    if (!res) {
      this.failAll(`malformed response line: ${line.slice(0, 120)}`);
      return;
    }
    const waiter = this.pending.get(res.id);
    if (!waiter) {
      return; // stray response; harmless
    }
    this.pending.delete(res.id);
    clearTimeout(waiter.timer);
    waiter.resolve(res);
  }

  private failAll(message: string): void {
    for (const [id, waiter] of this.pending) {
      this.pending.delete(id);
      clearTimeout(waiter.timer);
      waiter.reject(new Error(message));
    }
  }

  request(cmd: string, payload: Record<string, unknown>): Promise<BridgeResponse> {
    if (this.exited) {
      return Promise.reject(new Error(this.exitInfo || "adapter already exited"));
    }
    const id = this.nextId++;
    return new Promise((resolve, reject) => {
      const timer = setTimeout(() => {
        this.pending.delete(id);
        reject(new Error(`request ${cmd} timed out after ${this.timeoutMs} ms`));
      }, this.timeoutMs);
      this.pending.set(id, { resolve, reject, timer });
      this.child.stdin.write(
        serializeRequest({ id, cmd: cmd as never, payload }),
        (err) => {
          if (err) {
            this.pending.delete(id);
            clearTimeout(timer);
            reject(new Error(`write failed: ${err.message}`));
          }
        },
      );
    });
  }

  async call(cmd: string, payload: Record<string, unknown>): Promise<Record<string, unknown>> {
    const res = await this.request(cmd, payload);
    if (!res.ok) {
      throw new Error(`adapter error on ${cmd}: ${res.error ?? "unspecified"}`);
    }
    return res.payload ?? {};
  }

  kill(): void {
    if (!this.exited) {
      this.child.kill("SIGKILL");
    }
  }
}

function concatUpto(tasks: TaskSpec[], upto: number): InlineData {
  const features: number[][] = [];
  const labels: number[] = [];
  for (const task of tasks.slice(0, upto)) {
    features.push(...task.val.features);
    labels.push(...task.val.labels);
  }
  return { features, labels };
}

function asTaskData(data: InlineData, inlineLimit: number, scratch: string[]): TaskData {
  if (data.features.length <= inlineLimit) {
    return data;
  }
  const file = path.join(
    fs.mkdtempSync(path.join(os.tmpdir(), "cleval-bridge-")),
    "task.json",
  );
  fs.writeFileSync(file, JSON.stringify(data));
  scratch.push(path.dirname(file));
  return { path: file };
}

function finiteFraction(value: unknown): number {
  if (typeof value !== "number" || !Number.isFinite(value) || value < 0 || value > 1) {
    throw new Error(`adapter reported invalid accuracy: ${JSON.stringify(value)}`);
  }
  return value;
}

export async function driveExternalTrainer(
  command: string[],
  trial: TrialSpec,
  options: DriverOptions = {},
): Promise<RunRecord> {
  const timeoutMs = options.requestTimeoutMs ?? DEFAULT_REQUEST_TIMEOUT_MS;
  const inlineLimit = options.inlineLimit ?? DEFAULT_INLINE_LIMIT;
  const client = new AdapterClient(command, timeoutMs, options.env);
  const scratch: string[] = [];
  const started = Date.now();

  const accSeries: number[] = [];
  const paramCounts: number[] = [];
  let secondsTrain = 0;
  let status: "healthy" | "diverged" = "healthy";
  let divergedTask: number | null = null;
  let diagnostic: string | null = null;
  let taskIndex = 0;

  try {
    const hello = await client.call("hello", { version: PROTOCOL_VERSION });
    if (hello.version !== PROTOCOL_VERSION) {
      throw new Error(`protocol version mismatch: adapter speaks ${hello.version}`);
    }
    await client.call("init", {
      algorithm: trial.algorithm,
      seed: trial.trialSeed,
      num_features: trial.tasks[0].train.features[0].length,
      hyperparameters: trial.assignment,
    });
    for (taskIndex = 0; taskIndex < trial.tasks.length; taskIndex++) {
      const task = trial.tasks[taskIndex];
      const trained = await client.call("train_task", {
        task_index: taskIndex,
        class_ids: task.classIds,
        train: asTaskData(task.train, inlineLimit, scratch),
      });
      if (typeof trained.seconds === "number" && Number.isFinite(trained.seconds)) {
        secondsTrain += trained.seconds;
      }
      const counted = await client.call("param_count", {});
      paramCounts.push(Math.trunc(counted.count as number));
      const evaluated = await client.call("eval_upto", {
        upto: taskIndex + 1,
        val: asTaskData(concatUpto(trial.tasks, taskIndex + 1), inlineLimit, scratch),
      });
      accSeries.push(finiteFraction(evaluated.accuracy));
    }
    await client.call("shutdown", {});
  } catch (err) {
    status = "diverged";
    divergedTask = Math.min(taskIndex, trial.tasks.length - 1);
    diagnostic = (err as Error).message;
    // the series keeps only fully completed tasks
    accSeries.length = Math.min(accSeries.length, divergedTask);
    paramCounts.length = Math.min(paramCounts.length, divergedTask);
  } finally {
    client.kill();
    for (const dir of scratch) {
      fs.rmSync(dir, { recursive: true, force: true });
    }
  }

  const healthy = status === "healthy";
  const acc = healthy ? accSeries[accSeries.length - 1] : 0;
  const avgAcc = healthy ? accSeries.reduce((a, b) => a + b, 0) / accSeries.length : 0;
  return {
    schema_version: 1,
    algorithm: trial.algorithm,
    phase: trial.phase,
    r: trial.r,
    s: trial.s,
    assignment: trial.assignment,
    trial_seed: trial.trialSeed,
    acc_series: accSeries,
    acc,
    avg_acc: avgAcc,
    status,
    diverged_task: divergedTask,
    param_counts: paramCounts,
    diagnostic,
    timing: {
      seconds_train: secondsTrain,
      seconds_post: 0,
      seconds_total: (Date.now() - started) / 1000,
    },
  };
}
