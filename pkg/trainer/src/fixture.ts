/** Exports the cross-implementation forward fixture: a seeded random weight
 *  file, a 16x16 two-channel input (one grayscale PFM per channel) and this
 *  framework's inference output.  The inference engine must reproduce the
 *  output within 1e-4 without building the trainer.
 *
 *    node dist/fixture.js --out DIR [--seed N]
 */

import { mkdirSync } from "node:fs";
import { join } from "node:path";

import { writeFtbw } from "./ftbw.js";
import { FringeNet } from "./model.js";
import { writePfm } from "./pfm.js";
import { Rng } from "./rng.js";

export const FIXTURE_SIZE = 16;

export function buildFixtureNet(seed: number): FringeNet {
  const rng = new Rng(seed);
  const net = FringeNet.init(rng, false); // random head: the fixture must produce a nontrivial output
  // nontrivial batch-norm state so folding is actually exercised
  for (const params of net.bns.values()) {
    for (let i = 0; i < params.gamma.length; i++) {
      params.gamma[i] = rng.uniform(0.8, 1.2);
      params.beta[i] = rng.uniform(-0.05, 0.05);
      params.runningMean[i] = rng.uniform(-0.05, 0.05);
      params.runningVar[i] = rng.uniform(0.5, 1.5);
    }
  }
  // the file stores float32; compute the reference from those exact values
  for (const conv of net.convs.values()) {
    for (let i = 0; i < conv.w.length; i++) conv.w[i] = Math.fround(conv.w[i]);
    for (let i = 0; i < conv.b.length; i++) conv.b[i] = Math.fround(conv.b[i]);
  }
  for (const params of net.bns.values()) {
    for (let i = 0; i < params.gamma.length; i++) {
      params.gamma[i] = Math.fround(params.gamma[i]);
      params.beta[i] = Math.fround(params.beta[i]);
      params.runningMean[i] = Math.fround(params.runningMean[i]);
      params.runningVar[i] = Math.fround(params.runningVar[i]);
    }
  }
  return net;
}

export function exportFixture(outDir: string, seed: number): void {
  mkdirSync(outDir, { recursive: true });
  const net = buildFixtureNet(seed);
  writeFtbw(join(outDir, "fixture_weights.ftbw"), net.toTensors());
  const rng = new Rng(seed + 1);
  const n = FIXTURE_SIZE * FIXTURE_SIZE;
  const zc = new Float64Array(n);
  const zg = new Float64Array(n);
  for (let i = 0; i < n; i++) zc[i] = rng.next();
  for (let i = 0; i < n; i++) zg[i] = rng.next();
  // round the inputs to float32 before inference so both sides start from
  // the exact values stored in the files
  const zc32 = Float64Array.from(zc, Math.fround);
  const zg32 = Float64Array.from(zg, Math.fround);
  writePfm(join(outDir, "fixture_input_zc.pfm"), {
    width: FIXTURE_SIZE,
    height: FIXTURE_SIZE,
    channels: 1,
    data: zc32,
  });
  writePfm(join(outDir, "fixture_input_zg.pfm"), {
    width: FIXTURE_SIZE,
    height: FIXTURE_SIZE,
    channels: 1,
    data: zg32,
  });
  const out = net.forwardInfer(zc32, zg32, FIXTURE_SIZE, FIXTURE_SIZE);
  writePfm(join(outDir, "fixture_output.pfm"), {
    width: FIXTURE_SIZE,
    height: FIXTURE_SIZE,
    channels: 1,
    data: out,
  });
  console.log(`fixture written to ${outDir} (seed ${seed})`);
}

function get(flag: string): string | undefined {
  const i = process.argv.indexOf(flag);
  return i >= 0 ? process.argv[i + 1] : undefined;
}

if (process.argv[1]?.endsWith("fixture.js")) {
  const outDir = get("--out");
  if (!outDir) throw new Error("usage: fixture --out DIR [--seed N]");
  exportFixture(outDir, parseInt(get("--seed") ?? "77", 10));
}
