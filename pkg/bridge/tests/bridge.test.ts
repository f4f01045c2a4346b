import { execFileSync, spawnSync } from "child_process";
import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { fileURLToPath } from "url";

import Ajv2020 from "ajv/dist/2020.js";
import { describe, expect, it } from "vitest";

import { toyScenario } from "../src/data.js";
import { driveExternalTrainer, RunRecord, TrialSpec } from "../src/driver.js";
import { ReplayLogisticLearner } from "../src/learner.js";
import {
  parseRequest,
  parseResponse,
  serializeRequest,
  serializeResponse,
} from "../src/protocol.js";

const here = path.dirname(fileURLToPath(import.meta.url));
const repoRoot = path.resolve(here, "../..");
const adapterCommand = ["node", path.join(here, "../dist/adapter.js")];
const recordSchemaPath = path.join(
  repoRoot,
  "src/cleval/schemas/run_record.schema.json",
);

const ASSIGNMENT = { Epoch: 30, LR: 0.5, "Batch size": 16 };

function toyTrial(overrides: Partial<TrialSpec> = {}): TrialSpec {
  return {
    algorithm: "bridge:reference",
    phase: "tuning",
    r: 0,
    s: 0,
    assignment: ASSIGNMENT,
    trialSeed: 12345,
    tasks: toyScenario({
      numTasks: 3,
      classesPerTask: 2,
      dim: 4,
      perClass: 20,
      seed: 99,
    }),
    ...overrides,
  };
}

function withoutTiming(record: RunRecord): Omit<RunRecord, "timing"> {
  const { timing, ...rest } = record;
  return rest;
}

describe("wire protocol framing", () => {
  it("round-trips requests and responses", () => {
    const req = { id: 3, cmd: "hello" as const, payload: { version: 1 } };
    expect(parseRequest(serializeRequest(req).trim())).toEqual(req);
    const res = { id: 3, ok: true, payload: { version: 1 } };
    expect(parseResponse(serializeResponse(res).trim())).toEqual(res);
  });

  it("rejects malformed lines", () => {
    expect(parseRequest("{nope")).toBeNull();
    expect(parseResponse('{"id": "x", "ok": 1}')).toBeNull();
  });
});

describe("reference learner", () => {
  it("separates well-spread classes on a single task", () => {
    const [task] = toyScenario({
      numTasks: 1,
      classesPerTask: 3,
      dim: 4,
      perClass: 30,
      seed: 7,
    });
    const learner = new ReplayLogisticLearner({
      numFeatures: 4,
      seed: 1,
      hyperparameters: { Epoch: 60, LR: 0.5 },
    });
    learner.trainTask(task.classIds, task.train.features, task.train.labels);
    expect(learner.evaluate(task.val.features, task.val.labels)).toBeGreaterThan(0.9);
    expect(learner.paramCount()).toBe(3 * (4 + 1));
  });
});

describe("driving the reference adapter", () => {
  it("completes a 3-task toy scenario end to end", async () => {
    const record = await driveExternalTrainer(adapterCommand, toyTrial(), {
      requestTimeoutMs: 20_000,
    });
    expect(record.status).toBe("healthy");
    expect(record.acc_series).toHaveLength(3);
    for (const value of record.acc_series) {
      expect(value).toBeGreaterThanOrEqual(0);
      expect(value).toBeLessThanOrEqual(1);
    }
    expect(record.acc).toBe(record.acc_series[2]);
    expect(record.avg_acc).toBeCloseTo(
      record.acc_series.reduce((a, b) => a + b, 0) / 3,
      12,
    );
    // replay learner params: classes * (dim + 1), growing by task
    expect(record.param_counts).toEqual([10, 20, 30]);
    expect(record.diverged_task).toBeNull();
  });

  it("is deterministic across repeated seeded runs", async () => {
    const first = await driveExternalTrainer(adapterCommand, toyTrial());
    const second = await driveExternalTrainer(adapterCommand, toyTrial());
    expect(withoutTiming(second)).toEqual(withoutTiming(first));
  });

  it("validates against the harness's record schema", async () => {
    const schema = JSON.parse(fs.readFileSync(recordSchemaPath, "utf-8"));
    const ajv = new Ajv2020({ strict: false });
    const validate = ajv.compile(schema);
    const record = await driveExternalTrainer(adapterCommand, toyTrial());
    const ok = validate(JSON.parse(JSON.stringify(record)));
    expect(validate.errors ?? []).toEqual([]);
    expect(ok).toBe(true);
  });

  it("sends large tasks by file reference", async () => {
    const record = await driveExternalTrainer(adapterCommand, toyTrial(), {
      inlineLimit: 5, // force the reference path
    });
    expect(record.status).toBe("healthy");
    expect(record.acc_series).toHaveLength(3);
  });

  it("turns a non-finite accuracy into a diverged record", async () => {
    const record = await driveExternalTrainer(adapterCommand, toyTrial(), {
      env: { CLEVAL_ADAPTER_NAN: "1" },
      requestTimeoutMs: 20_000,
    });
    expect(record.status).toBe("diverged");
    expect(record.acc).toBe(0);
    expect(record.avg_acc).toBe(0);
    expect(record.diagnostic).toMatch(/accuracy/);
  });

  it("survives an adapter crash mid-run and keeps siblings alive", async () => {
    const crashing = driveExternalTrainer(adapterCommand, toyTrial({ s: 0 }), {
      env: { CLEVAL_ADAPTER_CRASH_AFTER: "5" }, // dies answering the first eval
      requestTimeoutMs: 20_000,
    });
    const healthy = driveExternalTrainer(adapterCommand, toyTrial({ s: 1 }), {
      requestTimeoutMs: 20_000,
    });
    const [crashed, sibling] = await Promise.all([crashing, healthy]);
    expect(crashed.status).toBe("diverged");
    expect(crashed.diagnostic).toMatch(/exited|timed out/);
    expect(crashed.acc_series.length).toBeLessThan(3);
    expect(sibling.status).toBe("healthy");
    expect(sibling.acc_series).toHaveLength(3);
  });

  it("never hangs on a silent adapter", async () => {
    const record = await driveExternalTrainer(
      ["node", "-e", "setTimeout(() => {}, 60000)"], // answers nothing
      toyTrial(),
      { requestTimeoutMs: 500 },
    );
    expect(record.status).toBe("diverged");
    expect(record.diagnostic).toMatch(/timed out/);
  });
});

describe("adapter protocol conformance", () => {
  function adapterSession(lines: string[], env: Record<string, string> = {}): string[] {
    const result = spawnSync(adapterCommand[0], adapterCommand.slice(1), {
      input: lines.join("\n") + "\n",
      encoding: "utf-8",
      env: { ...process.env, ...env },
      timeout: 20_000,
    });
    return result.stdout.trim().split("\n").filter(Boolean);
  }

  it("answers hello with the protocol version", () => {
    const [line] = adapterSession([
      JSON.stringify({ id: 1, cmd: "hello", payload: { version: 1 } }),
      JSON.stringify({ id: 2, cmd: "shutdown", payload: {} }),
    ]);
    const res = parseResponse(line)!;
    expect(res.ok).toBe(true);
    expect(res.payload?.version).toBe(1);
  });

  it("stays alive after an unknown command", () => {
    const lines = adapterSession([
      JSON.stringify({ id: 1, cmd: "frobnicate", payload: {} }),
      JSON.stringify({ id: 2, cmd: "hello", payload: { version: 1 } }),
      JSON.stringify({ id: 3, cmd: "shutdown", payload: {} }),
    ]);
    expect(lines).toHaveLength(3);
    const first = parseResponse(lines[0])!;
    expect(first.ok).toBe(false);
    expect(first.error).toMatch(/unknown cmd/);
    expect(parseResponse(lines[1])!.ok).toBe(true);
  });

  it("answers every request exactly once with matching ids", () => {
    const trial = toyTrial();
    const task = trial.tasks[0];
    const lines = adapterSession([
      JSON.stringify({ id: 10, cmd: "hello", payload: { version: 1 } }),
      JSON.stringify({
        id: 11,
        cmd: "init",
        payload: {
          algorithm: "x",
          seed: 1,
          num_features: 4,
          hyperparameters: ASSIGNMENT,
        },
      }),
      JSON.stringify({
        id: 12,
        cmd: "train_task",
        payload: { task_index: 0, class_ids: task.classIds, train: task.train },
      }),
      JSON.stringify({ id: 13, cmd: "param_count", payload: {} }),
      JSON.stringify({ id: 14, cmd: "shutdown", payload: {} }),
    ]);
    expect(lines.map((l) => parseResponse(l)!.id)).toEqual([10, 11, 12, 13, 14]);
    expect(lines.every((l) => parseResponse(l)!.ok)).toBe(true);
  });
});

describe("native record interop", () => {
  it("matches the field set of a record written by the harness CLI", async () => {
    const probe = spawnSync("python3", ["-c", "import cleval"], { encoding: "utf-8" });
    if (probe.status !== 0) {
      console.warn("python harness not importable; skipping interop check");
      return;
    }
    const workdir = fs.mkdtempSync(path.join(os.tmpdir(), "cleval-interop-"));
    const config = {
      schema_version: 1,
      algorithm: "replay",
      data: {
        source: {
          kind: "synthetic",
          num_classes: 4,
          dim: 8,
          per_class: 24,
          separation: 4.0,
          seed: 5,
        },
        split: { first_fraction: 0.5, seed: 2 },
      },
      scenario: { first_task_classes: 1, increment_classes: 1, val_fraction: 0.25 },
      space: {
        Epoch: [4],
        LR: [0.1],
        "LR Scheduler": ["Cosine"],
        "LR decay": [0.1],
        "Batch size": [16],
        "Weigh decay": [0.0005],
      },
      R: 1,
      S: 1,
      base_seed: 3,
    };
    const configPath = path.join(workdir, "config.json");
    fs.writeFileSync(configPath, JSON.stringify(config));
    execFileSync(
      "python3",
      ["-m", "cleval", "run", "--config", configPath, "--out", workdir],
      { cwd: repoRoot, encoding: "utf-8" },
    );
    const line = fs
      .readFileSync(path.join(workdir, "replay_tuning_records.jsonl"), "utf-8")
      .trim()
      .split("\n")[0];
    const nativeKeys = Object.keys(JSON.parse(line)).sort();
    const bridged = await driveExternalTrainer(adapterCommand, toyTrial());
    expect(Object.keys(bridged).sort()).toEqual(nativeKeys);
    fs.rmSync(workdir, { recursive: true, force: true });
  });
});
