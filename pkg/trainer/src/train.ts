/** Training entry point.
 *
 *   node dist/train.js --pairs DIR --out weights.ftbw [--steps N] [--batch N]
 *        [--crop N] [--lr F] [--seed N] [--val-every N] [--curve curve.tsv]
 *
 * Minimizes the chroma-residual L1 loss with Adam (initial rate 3e-4, halved
 * when validation stalls for 10 checks), keeps the best-validation weights,
 * and exports them as FTBW with canonical tensor names.
 */

import { writeFileSync } from "node:fs";

import { Adam, PlateauScheduler } from "./adam.js";
import {
  isValidationId,
  loadPair,
  Pair,
  readManifestIds,
  sampleSupervision,
  Supervision,
  validationSupervisions,
} from "./data.js";
import { writeFtbw } from "./ftbw.js";
import { residualL1 } from "./loss.js";
import { FringeNet } from "./model.js";
import { Rng } from "./rng.js";

export interface TrainConfig {
  pairsDir: string;
  outPath: string;
  steps: number;
  batch: number;
  crop: number;
  lr: number;
  seed: number;
  valEvery: number;
  plateauFactor: number;
  plateauPatience: number;
  curvePath?: string;
  maxPairs?: number;
  logEvery: number;
}

export const DEFAULTS = {
  steps: 200,
  batch: 8,
  crop: 32,
  lr: 3e-4,
  seed: 0,
  valEvery: 25,
  plateauFactor: 0.5,
  plateauPatience: 10,
  logEvery: 10,
};

export interface TrainResult {
  net: FringeNet;
  trainCurve: Array<{ step: number; loss: number; smoothed: number; lr: number }>;
  valCurve: Array<{ step: number; loss: number }>;
  bestVal: number;
}

export function train(config: TrainConfig, onLog?: (line: string) => void): TrainResult {
  const log = onLog ?? ((line: string) => console.log(line));
  // one or more pairs directories, comma-separated
  const dirs = config.pairsDir.split(",");
  const trainPairs: Pair[] = [];
  const valPairs: Pair[] = [];
  for (const dir of dirs) {
    let ids = readManifestIds(dir);
    if (config.maxPairs !== undefined) ids = ids.slice(0, config.maxPairs);
    for (const id of ids) {
      const pair = loadPair(dir, id);
      (isValidationId(id) ? valPairs : trainPairs).push(pair);
    }
  }
  if (trainPairs.length === 0) throw new Error("no training pairs after the split");
  log(`pairs: ${trainPairs.length} train / ${valPairs.length} val`);
  const valSet: Supervision[] =
    valPairs.length > 0
      ? validationSupervisions(valPairs.slice(0, 24), config.crop)
      : validationSupervisions(trainPairs.slice(0, 8), config.crop);

  const rng = new Rng(config.seed + 7);
  const net = FringeNet.init(new Rng(config.seed));
  const optimizer = new Adam(config.lr);
  const scheduler = new PlateauScheduler(
    optimizer,
    config.plateauFactor,
    config.plateauPatience,
  );
  let best = net.clone();
  let bestVal = Infinity;
  const trainCurve: TrainResult["trainCurve"] = [];
  const valCurve: TrainResult["valCurve"] = [];
  let smoothed = NaN;

  const evalValidation = (): number => {
    let total = 0;
    for (const s of valSet) {
      const phi = net.forwardInfer(s.zc, s.zg, config.crop, config.crop);
      let acc = 0;
      for (let i = 0; i < phi.length; i++) acc += Math.abs(phi[i] - s.target[i]);
      total += acc / phi.length;
    }
    return total / valSet.length;
  };

  for (let step = 1; step <= config.steps; step++) {
    const batch: Supervision[] = [];
    for (let b = 0; b < config.batch; b++) {
      const pair = trainPairs[rng.int(trainPairs.length)];
      batch.push(sampleSupervision(pair, rng, config.crop));
    }
    const cache = net.forwardTrain(
      batch.map(({ zc, zg }) => ({ zc, zg })),
      config.crop,
      config.crop,
    );
    const { value, grad } = residualL1(cache.phi, batch.map((s) => s.target));
    if (!Number.isFinite(value)) throw new Error(`NaN loss at step ${step}; aborting`);
    const grads = net.backward(cache, grad);
    optimizer.step(net, grads);
    smoothed = Number.isNaN(smoothed) ? value : 0.9 * smoothed + 0.1 * value;
    trainCurve.push({ step, loss: value, smoothed, lr: optimizer.lr });
    if (step % config.logEvery === 0 || step === 1) {
      log(`step ${step}/${config.steps} loss ${value.toFixed(5)} smoothed ${smoothed.toFixed(5)} lr ${optimizer.lr.toExponential(2)}`);
    }
    if (step % config.valEvery === 0 || step === config.steps) {
      const val = evalValidation();
      valCurve.push({ step, loss: val });
      scheduler.observe(val);
      if (val < bestVal) {
        bestVal = val;
        best = net.clone();
        // checkpoint on every improvement so long runs are inspectable
        writeFtbw(config.outPath, best.toTensors());
      }
      log(`  val ${val.toFixed(5)} (best ${bestVal.toFixed(5)})`);
    }
  }
  if (config.curvePath) {
    const lines = ["step\ttrain_loss\tsmoothed\tlr"];
    for (const row of trainCurve) {
      lines.push(`${row.step}\t${row.loss}\t${row.smoothed}\t${row.lr}`);
    }
    lines.push("");
    lines.push("step\tval_loss");
    for (const row of valCurve) lines.push(`${row.step}\t${row.loss}`);
    writeFileSync(config.curvePath, lines.join("\n") + "\n");
  }
  writeFtbw(config.outPath, best.toTensors());
  log(`exported best-validation weights (val ${bestVal.toFixed(5)}) to ${config.outPath}`);
  return { net: best, trainCurve, valCurve, bestVal };
}

function parseArgs(argv: string[]): TrainConfig {
  const get = (flag: string): string | undefined => {
    const i = argv.indexOf(flag);
    return i >= 0 ? argv[i + 1] : undefined;
  };
  const pairsDir = get("--pairs");
  const outPath = get("--out");
  if (!pairsDir || !outPath) {
    throw new Error("usage: train --pairs DIR --out FILE [--steps N --batch N --crop N --lr F --seed N]");
  }
  return {
    pairsDir,
    outPath,
    steps: parseInt(get("--steps") ?? String(DEFAULTS.steps), 10),
    batch: parseInt(get("--batch") ?? String(DEFAULTS.batch), 10),
    crop: parseInt(get("--crop") ?? String(DEFAULTS.crop), 10),
    lr: parseFloat(get("--lr") ?? String(DEFAULTS.lr)),
    seed: parseInt(get("--seed") ?? String(DEFAULTS.seed), 10),
    valEvery: parseInt(get("--val-every") ?? String(DEFAULTS.valEvery), 10),
    plateauFactor: DEFAULTS.plateauFactor,
    plateauPatience: DEFAULTS.plateauPatience,
    curvePath: get("--curve"),
    maxPairs: get("--max-pairs") ? parseInt(get("--max-pairs")!, 10) : undefined,
    logEvery: parseInt(get("--log-every") ?? String(DEFAULTS.logEvery), 10),
  };
}

const invokedDirectly = process.argv[1]?.endsWith("train.js");
if (invokedDirectly) {
  train(parseArgs(process.argv.slice(2)));
}
