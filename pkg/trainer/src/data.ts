/** Reader for the simulator's pairs directory (manifest.tsv plus
 *  clean/deblurred PFM payloads) and the crop sampler that turns pairs into
 *  (z_c, z_G, target) supervisions. */

import { readFileSync } from "node:fs";
import { join } from "node:path";

import { PfmImage, readPfm } from "./pfm.js";
import { Rng } from "./rng.js";

export interface Pair {
  id: number;
  clean: PfmImage;
  deblurred: PfmImage;
}

export interface Supervision {
  zc: Float64Array;
  zg: Float64Array;
  target: Float64Array;
}

export function readManifestIds(pairsDir: string): number[] {
  const text = readFileSync(join(pairsDir, "manifest.tsv"), "utf-8");
  const lines = text.trim().split("\n");
  const header = lines[0].split("\t");
  const idCol = header.indexOf("id");
  if (idCol < 0) throw new Error("manifest.tsv: missing id column");
  return lines.slice(1).map((line) => parseInt(line.split("\t")[idCol], 10));
}

export function loadPair(pairsDir: string, id: number): Pair {
  const name = `${String(id).padStart(6, "0")}.pfm`;
  return {
    id,
    clean: readPfm(join(pairsDir, "clean", name)),
    deblurred: readPfm(join(pairsDir, "deblurred", name)),
  };
}

/** Deterministic 10% validation split by a multiplicative id hash. */
export function isValidationId(id: number): boolean {
  const h = (Math.imul(id + 1, 2654435761) >>> 0) / 4294967296;
  return h < 0.1;
}

function cropPlane(
  image: PfmImage,
  channel: number,
  row: number,
  col: number,
  size: number,
): Float64Array {
  const out = new Float64Array(size * size);
  const { width, height, data } = image;
  const base = channel * height * width;
  for (let y = 0; y < size; y++) {
    const src = base + (row + y) * width + col;
    out.set(data.subarray(src, src + size), y * size);
  }
  return out;
}

/** One supervision: a random crop of a random chroma channel against green. */
export function sampleSupervision(pair: Pair, rng: Rng, crop: number): Supervision {
  const { width, height } = pair.clean;
  if (width < crop || height < crop) throw new Error(`pair smaller than crop ${crop}`);
  const row = rng.int(height - crop + 1);
  const col = rng.int(width - crop + 1);
  const channel = rng.next() < 0.5 ? 0 : 2; // red and blue are symmetric
  const zc = cropPlane(pair.deblurred, channel, row, col, crop);
  const zg = cropPlane(pair.deblurred, 1, row, col, crop);
  const uc = cropPlane(pair.clean, channel, row, col, crop);
  const ug = cropPlane(pair.clean, 1, row, col, crop);
  const target = new Float64Array(crop * crop);
  for (let i = 0; i < target.length; i++) {
    target[i] = zc[i] - zg[i] - (uc[i] - ug[i]);
  }
  return { zc, zg, target };
}

/** Fixed supervisions covering both channels, for validation. */
export function validationSupervisions(pairs: Pair[], crop: number): Supervision[] {
  const out: Supervision[] = [];
  for (const pair of pairs) {
    const { width, height } = pair.clean;
    const row = Math.max(0, Math.floor((height - crop) / 2));
    const col = Math.max(0, Math.floor((width - crop) / 2));
    for (const channel of [0, 2]) {
      const zc = cropPlane(pair.deblurred, channel, row, col, crop);
      const zg = cropPlane(pair.deblurred, 1, row, col, crop);
      const uc = cropPlane(pair.clean, channel, row, col, crop);
      const ug = cropPlane(pair.clean, 1, row, col, crop);
      const target = new Float64Array(crop * crop);
      for (let i = 0; i < target.length; i++) target[i] = zc[i] - zg[i] - (uc[i] - ug[i]);
      out.push({ zc, zg, target });
    }
  }
  return out;
}
