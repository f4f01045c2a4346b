/**
 * The reference adapter's model: multinomial logistic regression with
 * naive replay (every seen training example is kept and replayed). It
 * exists to exercise the protocol deterministically, not to be accurate.
 */

import { mulberry32 } from "./prng.js";

export interface LearnerOptions {
  numFeatures: number;
  seed: number;
  hyperparameters: Record<string, unknown>;
}

function hyper(
  hp: Record<string, unknown>,
  names: string[],
  fallback: number,
): number {
  for (const name of names) {
    const value = hp[name];
    if (typeof value === "number" && Number.isFinite(value)) {
      return value;
    }
  }
  return fallback;
}

export class ReplayLogisticLearner {
  private readonly numFeatures: number;
  private readonly epochs: number;
  private readonly lr: number;
  private readonly next: () => number;

  private classIds: number[] = [];
  private weights: number[][] = []; // one row per class
  private biases: number[] = [];
  private memoryX: number[][] = [];
  private memoryY: number[] = []; // class ids

  constructor(options: LearnerOptions) {
    this.numFeatures = options.numFeatures;
    this.next = mulberry32(options.seed >>> 0);
    this.epochs = Math.max(1, Math.round(hyper(options.hyperparameters, ["Epoch", "epochs"], 25)));
    this.lr = hyper(options.hyperparameters, ["LR", "lr"], 0.5);
  }

  trainTask(classIds: number[], features: number[][], labels: number[]): void {
    for (const classId of classIds) {
      if (this.classIds.includes(classId)) {
        throw new Error(`class ${classId} already trained`);
      }
      this.classIds.push(classId);
      this.weights.push(
        Array.from({ length: this.numFeatures }, () => 0.01 * (this.next() - 0.5)),
      );
      this.biases.push(0);
    }
    const poolX = [...this.memoryX, ...features];
    const poolY = [...this.memoryY, ...labels];
    const index = new Map(this.classIds.map((c, i) => [c, i]));
    const targets = poolY.map((c) => {
      const i = index.get(c);
      if (i === undefined) {
        throw new Error(`label ${c} not among trained classes`);
      }
      return i;
    });
    for (let epoch = 0; epoch < this.epochs; epoch++) {
      this.fullBatchStep(poolX, targets);
    }
    this.memoryX.push(...features.map((row) => [...row]));
    this.memoryY.push(...labels);
  }

  private logits(x: number[]): number[] {
    return this.weights.map((row, c) => {
      let z = this.biases[c];
      for (let j = 0; j < this.numFeatures; j++) {
        z += row[j] * x[j];
      }
      return z;
    });
  }

  private fullBatchStep(features: number[][], targets: number[]): void {
    const classes = this.classIds.length;
    const gradW = this.weights.map((row) => row.map(() => 0));
    const gradB = new Array<number>(classes).fill(0);
    const n = features.length;
    for (let i = 0; i < n; i++) {
      const z = this.logits(features[i]);
      const zMax = Math.max(...z);
      const exp = z.map((v) => Math.exp(v - zMax));
      const sum = exp.reduce((a, b) => a + b, 0);
      for (let c = 0; c < classes; c++) {
        const err = exp[c] / sum - (targets[i] === c ? 1 : 0);
        gradB[c] += err / n;
        const row = gradW[c];
        const x = features[i];
        for (let j = 0; j < this.numFeatures; j++) {
          row[j] += (err * x[j]) / n;
        }
      }
    }
    for (let c = 0; c < classes; c++) {
      this.biases[c] -= this.lr * gradB[c];
      for (let j = 0; j < this.numFeatures; j++) {
        this.weights[c][j] -= this.lr * gradW[c][j];
      }
    }
  }

  predict(x: number[]): number {
    const z = this.logits(x);
    let best = 0;
    for (let c = 1; c < z.length; c++) {
      if (z[c] > z[best]) {
        best = c;
      }
    }
    return this.classIds[best];
  }

  evaluate(features: number[][], labels: number[]): number {
    if (features.length === 0) {
      throw new Error("empty evaluation set");
    }
    let hits = 0;
    for (let i = 0; i < features.length; i++) {
      if (this.predict(features[i]) === labels[i]) {
        hits++;
      }
    }
    return hits / features.length;
  }

  paramCount(): number {
    return this.classIds.length * (this.numFeatures + 1);
  }
}
