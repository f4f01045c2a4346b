/** Seeded toy scenario generation for exercising the bridge. */

import { gaussian, mulberry32 } from "./prng.js";
import { TaskSpec } from "./driver.js";

export interface ToyOptions {
  numTasks: number;
  classesPerTask: number;
  dim: number;
  perClass: number;
  seed: number;
  separation?: number;
  valFraction?: number;
}

export function toyScenario(options: ToyOptions): TaskSpec[] {
  const separation = options.separation ?? 3.0;
  const valFraction = options.valFraction ?? 0.25;
  const next = mulberry32(options.seed >>> 0);
  const totalClasses = options.numTasks * options.classesPerTask;

  const means: number[][] = [];
  for (let c = 0; c < totalClasses; c++) {
    const direction = Array.from({ length: options.dim }, () => gaussian(next));
    const norm = Math.sqrt(direction.reduce((a, v) => a + v * v, 0));
    means.push(direction.map((v) => (separation * v) / norm));
  }

  const tasks: TaskSpec[] = [];
  for (let t = 0; t < options.numTasks; t++) {
    const classIds = Array.from(
      { length: options.classesPerTask },
      (_, i) => t * options.classesPerTask + i,
    );
    const train = { features: [] as number[][], labels: [] as number[] };
    const val = { features: [] as number[][], labels: [] as number[] };
    for (const classId of classIds) {
      const nVal = Math.max(1, Math.floor(options.perClass * valFraction));
      for (let i = 0; i < options.perClass; i++) {
        const row = means[classId].map((m) => m + gaussian(next));
        const side = i < nVal ? val : train;
        side.features.push(row);
        side.labels.push(classId);
      }
    }
    tasks.push({ classIds, train, val });
  }
  return tasks;
}
