/** The residual fringe network and its gradients.
 *
 * Stride-1 graph (tags 1..11): CBR 16/2, CBR 32/16, CBR 64/32, CBR 64/64,
 * CBR 64/64, Add(3), CBR 32/64, Add(2), CBR 16/32, Add(1), C 1/16.
 * Convolutions are 3x3 cross-correlations over symmetric-padded input; batch
 * norm uses batch statistics while training and running statistics at
 * inference.  Everything runs in float64 so the finite-difference gradient
 * check is meaningful; weights are rounded to float32 only at export.
 */

import { NamedTensor } from "./ftbw.js";
import { Rng } from "./rng.js";

export const CONV_LAYERS: Array<[number, number, number]> = [
  [1, 16, 2],
  [2, 32, 16],
  [3, 64, 32],
  [4, 64, 64],
  [5, 64, 64],
  [7, 32, 64],
  [9, 16, 32],
  [11, 1, 16],
];
export const BN_TAGS = new Set([1, 2, 3, 4, 5, 7, 9]);
export const SKIPS = new Map<number, number>([
  [5, 3],
  [7, 2],
  [9, 1],
]);
export const BN_EPS = 1e-5;
export const BN_MOMENTUM = 0.1;

export interface ConvParams {
  outC: number;
  inC: number;
  w: Float64Array; // (out, in, 3, 3)
  b: Float64Array; // (out)
}

export interface BnParams {
  gamma: Float64Array;
  beta: Float64Array;
  runningMean: Float64Array;
  runningVar: Float64Array;
}

/** Symmetric (edge-repeat) pad of a (C, H, W) stack by one pixel. */
export function padSymmetric(x: Float64Array, c: number, h: number, w: number): Float64Array {
  const hp = h + 2;
  const wp = w + 2;
  const out = new Float64Array(c * hp * wp);
  const reflect = (i: number, n: number) => (i < 0 ? 0 : i >= n ? n - 1 : i);
  for (let ch = 0; ch < c; ch++) {
    for (let y = -1; y <= h; y++) {
      const sy = reflect(y, h);
      const srcRow = (ch * h + sy) * w;
      const dstRow = (ch * hp + (y + 1)) * wp;
      out[dstRow] = x[srcRow + reflect(-1, w)];
      for (let j = 0; j < w; j++) out[dstRow + 1 + j] = x[srcRow + j];
      out[dstRow + 1 + w] = x[srcRow + (w - 1)];
    }
  }
  return out;
}

/** Fold the gradient of a symmetric pad back onto the source pixels. */
function unpadGrad(dxp: Float64Array, c: number, h: number, w: number): Float64Array {
  const hp = h + 2;
  const wp = w + 2;
  const out = new Float64Array(c * h * w);
  const reflect = (i: number, n: number) => (i < 0 ? 0 : i >= n ? n - 1 : i);
  for (let ch = 0; ch < c; ch++) {
    for (let y = -1; y <= h; y++) {
      const sy = reflect(y, h);
      const dstRow = (ch * h + sy) * w;
      const srcRow = (ch * hp + (y + 1)) * wp;
      out[dstRow] += dxp[srcRow];
      for (let j = 0; j < w; j++) out[dstRow + j] += dxp[srcRow + 1 + j];
      out[dstRow + (w - 1)] += dxp[srcRow + 1 + w];
    }
  }
  return out;
}

export function conv3x3(
  xp: Float64Array, // padded (inC, h+2, w+2)
  inC: number,
  h: number,
  w: number,
  p: ConvParams,
): Float64Array {
  const wp = w + 2;
  const out = new Float64Array(p.outC * h * w);
  for (let o = 0; o < p.outC; o++) {
    const outBase = o * h * w;
    out.fill(p.b[o], outBase, outBase + h * w);
    for (let c = 0; c < inC; c++) {
      const wb = (o * inC + c) * 9;
      const w00 = p.w[wb], w01 = p.w[wb + 1], w02 = p.w[wb + 2];
      const w10 = p.w[wb + 3], w11 = p.w[wb + 4], w12 = p.w[wb + 5];
      const w20 = p.w[wb + 6], w21 = p.w[wb + 7], w22 = p.w[wb + 8];
      const chBase = c * (h + 2) * wp;
      for (let i = 0; i < h; i++) {
        const r0 = chBase + i * wp;
        const r1 = r0 + wp;
        const r2 = r1 + wp;
        const dst = outBase + i * w;
        for (let j = 0; j < w; j++) {
          out[dst + j] +=
            w00 * xp[r0 + j] + w01 * xp[r0 + j + 1] + w02 * xp[r0 + j + 2] +
            w10 * xp[r1 + j] + w11 * xp[r1 + j + 1] + w12 * xp[r1 + j + 2] +
            w20 * xp[r2 + j] + w21 * xp[r2 + j + 1] + w22 * xp[r2 + j + 2];
        }
      }
    }
  }
  return out;
}

function conv3x3BackwardInput(
  dy: Float64Array,
  p: ConvParams,
  h: number,
  w: number,
): Float64Array {
  const wp = w + 2;
  const dxp = new Float64Array(p.inC * (h + 2) * wp);
  // gather form: pad dy by 2 zeros so every padded-input position reads its
  // nine downstream contributions in one pass with the flipped kernel
  const hq = h + 4;
  const wq = w + 4;
  const dyp = new Float64Array(p.outC * hq * wq);
  for (let o = 0; o < p.outC; o++) {
    for (let i = 0; i < h; i++) {
      const src = o * h * w + i * w;
      const dst = (o * hq + i + 2) * wq + 2;
      dyp.set(dy.subarray(src, src + w), dst);
    }
  }
  for (let c = 0; c < p.inC; c++) {
    const chBase = c * (h + 2) * wp;
    for (let o = 0; o < p.outC; o++) {
      const wb = (o * p.inC + c) * 9;
      // flipped: dxp[r, s] += w[ky, kx] * dy[r - ky, s - kx]
      const w00 = p.w[wb + 8], w01 = p.w[wb + 7], w02 = p.w[wb + 6];
      const w10 = p.w[wb + 5], w11 = p.w[wb + 4], w12 = p.w[wb + 3];
      const w20 = p.w[wb + 2], w21 = p.w[wb + 1], w22 = p.w[wb];
      const oBase = o * hq * wq;
      for (let r = 0; r < h + 2; r++) {
        const r0 = oBase + r * wq;
        const r1 = r0 + wq;
        const r2 = r1 + wq;
        const dst = chBase + r * wp;
        for (let s = 0; s < wp; s++) {
          dxp[dst + s] +=
            w00 * dyp[r0 + s] + w01 * dyp[r0 + s + 1] + w02 * dyp[r0 + s + 2] +
            w10 * dyp[r1 + s] + w11 * dyp[r1 + s + 1] + w12 * dyp[r1 + s + 2] +
            w20 * dyp[r2 + s] + w21 * dyp[r2 + s + 1] + w22 * dyp[r2 + s + 2];
        }
      }
    }
  }
  return dxp;
}

function conv3x3BackwardParams(
  dy: Float64Array,
  xp: Float64Array,
  p: ConvParams,
  h: number,
  w: number,
  dW: Float64Array,
  dB: Float64Array,
): void {
  const wp = w + 2;
  for (let o = 0; o < p.outC; o++) {
    const dyBase = o * h * w;
    let sb = 0;
    for (let i = dyBase; i < dyBase + h * w; i++) sb += dy[i];
    dB[o] += sb;
    for (let c = 0; c < p.inC; c++) {
      const chBase = c * (h + 2) * wp;
      let a00 = 0, a01 = 0, a02 = 0, a10 = 0, a11 = 0, a12 = 0, a20 = 0, a21 = 0, a22 = 0;
      for (let i = 0; i < h; i++) {
        const r0 = chBase + i * wp;
        const r1 = r0 + wp;
        const r2 = r1 + wp;
        const d = dyBase + i * w;
        for (let j = 0; j < w; j++) {
          const g = dy[d + j];
          a00 += g * xp[r0 + j]; a01 += g * xp[r0 + j + 1]; a02 += g * xp[r0 + j + 2];
          a10 += g * xp[r1 + j]; a11 += g * xp[r1 + j + 1]; a12 += g * xp[r1 + j + 2];
          a20 += g * xp[r2 + j]; a21 += g * xp[r2 + j + 1]; a22 += g * xp[r2 + j + 2];
        }
      }
      const wb = (o * p.inC + c) * 9;
      dW[wb] += a00; dW[wb + 1] += a01; dW[wb + 2] += a02;
      dW[wb + 3] += a10; dW[wb + 4] += a11; dW[wb + 5] += a12;
      dW[wb + 6] += a20; dW[wb + 7] += a21; dW[wb + 8] += a22;
    }
  }
}

interface LayerCache {
  tag: number;
  xpadded: Float64Array[]; // per sample, conv input after padding
  convOut: Float64Array[]; // per sample, conv output (pre-BN)
  xhat?: Float64Array[]; // per sample, normalized activations
  invStd?: Float64Array; // per channel
  mean?: Float64Array;
  outputs: Float64Array[]; // per sample, post-ReLU (and pre-skip-add)
}

export interface ForwardCache {
  n: number;
  h: number;
  w: number;
  layers: LayerCache[];
  skipsTaken: Map<number, Float64Array[]>; // tag -> post-CBR outputs feeding skips
  phi: Float64Array[]; // per sample (h*w)
}

export interface Gradients {
  convW: Map<number, Float64Array>;
  convB: Map<number, Float64Array>;
  bnGamma: Map<number, Float64Array>;
  bnBeta: Map<number, Float64Array>;
}

export class FringeNet {
  convs = new Map<number, ConvParams>();
  bns = new Map<number, BnParams>();

  static init(rng: Rng, zeroHead = true): FringeNet {
    const net = new FringeNet();
    for (const [tag, outC, inC] of CONV_LAYERS) {
      // Kaiming-uniform, fan-in mode, as if written for ReLU throughout;
      // the output conv starts at zero so the residual network begins as
      // the identity correction instead of 40x-off-scale noise
      const bound = Math.sqrt(6.0 / (inC * 9));
      const w = new Float64Array(outC * inC * 9);
      if (!(zeroHead && tag === 11)) {
        for (let i = 0; i < w.length; i++) w[i] = rng.uniform(-bound, bound);
      }
      const b = new Float64Array(outC);
      net.convs.set(tag, { outC, inC, w, b });
      if (BN_TAGS.has(tag)) {
        net.bns.set(tag, {
          gamma: new Float64Array(outC).fill(1),
          beta: new Float64Array(outC),
          runningMean: new Float64Array(outC),
          runningVar: new Float64Array(outC).fill(1),
        });
      }
    }
    return net;
  }

  static fromTensors(tensors: Map<string, NamedTensor>): FringeNet {
    const net = new FringeNet();
    const take = (name: string, size: number): Float64Array => {
      const t = tensors.get(name);
      if (!t) throw new Error(`missing tensor ${name}`);
      if (t.data.length !== size) throw new Error(`${name}: expected ${size} values, got ${t.data.length}`);
      return new Float64Array(t.data);
    };
    for (const [tag, outC, inC] of CONV_LAYERS) {
      net.convs.set(tag, {
        outC,
        inC,
        w: take(`conv${tag}.w`, outC * inC * 9),
        b: take(`conv${tag}.b`, outC),
      });
      if (BN_TAGS.has(tag)) {
        net.bns.set(tag, {
          gamma: take(`bn${tag}.gamma`, outC),
          beta: take(`bn${tag}.beta`, outC),
          runningMean: take(`bn${tag}.mean`, outC),
          runningVar: take(`bn${tag}.var`, outC),
        });
      }
    }
    return net;
  }

  toTensors(): NamedTensor[] {
    const out: NamedTensor[] = [];
    for (const [tag, outC, inC] of CONV_LAYERS) {
      const conv = this.convs.get(tag)!;
      out.push({ name: `conv${tag}.w`, dims: [outC, inC, 3, 3], data: conv.w });
      out.push({ name: `conv${tag}.b`, dims: [outC], data: conv.b });
      const bn = this.bns.get(tag);
      if (bn) {
        out.push({ name: `bn${tag}.gamma`, dims: [outC], data: bn.gamma });
        out.push({ name: `bn${tag}.beta`, dims: [outC], data: bn.beta });
        out.push({ name: `bn${tag}.mean`, dims: [outC], data: bn.runningMean });
        out.push({ name: `bn${tag}.var`, dims: [outC], data: bn.runningVar });
      }
    }
    return out;
  }

  parameterCount(): number {
    let count = 0;
    for (const [tag, outC, inC] of CONV_LAYERS) {
      count += outC * inC * 9 + outC;
      if (BN_TAGS.has(tag)) count += 2 * outC;
    }
    return count;
  }

  clone(): FringeNet {
    const net = new FringeNet();
    for (const [tag, p] of this.convs) {
      net.convs.set(tag, { ...p, w: new Float64Array(p.w), b: new Float64Array(p.b) });
    }
    for (const [tag, p] of this.bns) {
      net.bns.set(tag, {
        gamma: new Float64Array(p.gamma),
        beta: new Float64Array(p.beta),
        runningMean: new Float64Array(p.runningMean),
        runningVar: new Float64Array(p.runningVar),
      });
    }
    return net;
  }

  /** Inference: one sample, running statistics folded to a per-channel affine. */
  forwardInfer(zc: Float64Array, zg: Float64Array, h: number, w: number): Float64Array {
    const hw = h * w;
    let x: Float64Array = new Float64Array(2 * hw);
    x.set(zc, 0);
    x.set(zg, hw);
    let inC = 2;
    const saved = new Map<number, Float64Array>();
    for (const [tag, outC] of CONV_LAYERS.map(([t, o]) => [t, o] as const)) {
      const conv = this.convs.get(tag)!;
      const xp = padSymmetric(x, inC, h, w);
      let y = conv3x3(xp, inC, h, w, conv);
      const bn = this.bns.get(tag);
      if (bn) {
        for (let c = 0; c < outC; c++) {
          const scale = bn.gamma[c] / Math.sqrt(bn.runningVar[c] + BN_EPS);
          const shift = bn.beta[c] - bn.runningMean[c] * scale;
          const base = c * hw;
          for (let i = 0; i < hw; i++) {
            const v = y[base + i] * scale + shift;
            y[base + i] = v > 0 ? v : 0; // BN then ReLU
          }
        }
      }
      const src = SKIPS.get(tag);
      if (src !== undefined) {
        const other = saved.get(src)!;
        for (let i = 0; i < y.length; i++) y[i] += other[i];
      }
      if (tag === 1 || tag === 2 || tag === 3) saved.set(tag, y);
      x = y;
      inC = outC;
    }
    return x; // (1, h, w)
  }

  /** Training-mode forward over a batch; returns phi and the backward cache. */
  forwardTrain(
    inputs: Array<{ zc: Float64Array; zg: Float64Array }>,
    h: number,
    w: number,
    updateRunning = true,
  ): ForwardCache {
    const n = inputs.length;
    const hw = h * w;
    let current: Float64Array[] = inputs.map(({ zc, zg }) => {
      const x = new Float64Array(2 * hw);
      x.set(zc, 0);
      x.set(zg, hw);
      return x;
    });
    let inC = 2;
    const layers: LayerCache[] = [];
    const skipsTaken = new Map<number, Float64Array[]>();
    for (const [tag, outC] of CONV_LAYERS.map(([t, o]) => [t, o] as const)) {
      const conv = this.convs.get(tag)!;
      const cache: LayerCache = { tag, xpadded: [], convOut: [], outputs: [] };
      const preBn: Float64Array[] = [];
      for (let s = 0; s < n; s++) {
        const xp = padSymmetric(current[s], inC, h, w);
        cache.xpadded.push(xp);
        const y = conv3x3(xp, inC, h, w, conv);
        cache.convOut.push(y);
        preBn.push(y);
      }
      let outputs: Float64Array[];
      const bn = this.bns.get(tag);
      if (bn) {
        const m = n * hw;
        const mean = new Float64Array(outC);
        const varr = new Float64Array(outC);
        for (let c = 0; c < outC; c++) {
          let acc = 0;
          for (let s = 0; s < n; s++) {
            const y = preBn[s];
            const base = c * hw;
            for (let i = 0; i < hw; i++) acc += y[base + i];
          }
          mean[c] = acc / m;
          let accv = 0;
          for (let s = 0; s < n; s++) {
            const y = preBn[s];
            const base = c * hw;
            for (let i = 0; i < hw; i++) {
              const d = y[base + i] - mean[c];
              accv += d * d;
            }
          }
          varr[c] = accv / m;
        }
        const invStd = new Float64Array(outC);
        for (let c = 0; c < outC; c++) invStd[c] = 1.0 / Math.sqrt(varr[c] + BN_EPS);
        if (updateRunning) {
          const unbias = m > 1 ? m / (m - 1) : 1;
          for (let c = 0; c < outC; c++) {
            bn.runningMean[c] = (1 - BN_MOMENTUM) * bn.runningMean[c] + BN_MOMENTUM * mean[c];
            bn.runningVar[c] =
              (1 - BN_MOMENTUM) * bn.runningVar[c] + BN_MOMENTUM * varr[c] * unbias;
          }
        }
        cache.mean = mean;
        cache.invStd = invStd;
        cache.xhat = [];
        outputs = [];
        for (let s = 0; s < n; s++) {
          const y = preBn[s];
          const xhat = new Float64Array(outC * hw);
          const out = new Float64Array(outC * hw);
          for (let c = 0; c < outC; c++) {
            const base = c * hw;
            const g = bn.gamma[c];
            const be = bn.beta[c];
            for (let i = 0; i < hw; i++) {
              const xh = (y[base + i] - mean[c]) * invStd[c];
              xhat[base + i] = xh;
              const v = g * xh + be;
              out[base + i] = v > 0 ? v : 0;
            }
          }
          cache.xhat.push(xhat);
          outputs.push(out);
        }
      } else {
        outputs = preBn.map((y) => new Float64Array(y));
      }
      const src = SKIPS.get(tag);
      if (src !== undefined) {
        const earlier = skipsTaken.get(src)!;
        outputs = outputs.map((y, s) => {
          const merged = new Float64Array(y);
          const other = earlier[s];
          for (let i = 0; i < merged.length; i++) merged[i] += other[i];
          return merged;
        });
      }
      cache.outputs = outputs;
      if (tag === 1 || tag === 2 || tag === 3) skipsTaken.set(tag, outputs);
      layers.push(cache);
      current = outputs;
      inC = outC;
    }
    return { n, h, w, layers, skipsTaken, phi: current };
  }

  /** Backpropagate dL/dphi through the cached forward pass. */
  backward(cache: ForwardCache, dphi: Float64Array[]): Gradients {
    const { n, h, w } = cache;
    const hw = h * w;
    const grads: Gradients = {
      convW: new Map(),
      convB: new Map(),
      bnGamma: new Map(),
      bnBeta: new Map(),
    };
    for (const [tag, outC, inC] of CONV_LAYERS) {
      grads.convW.set(tag, new Float64Array(outC * inC * 9));
      grads.convB.set(tag, new Float64Array(outC));
      if (BN_TAGS.has(tag)) {
        grads.bnGamma.set(tag, new Float64Array(outC));
        grads.bnBeta.set(tag, new Float64Array(outC));
      }
    }
    // gradient flowing into each layer's post-(CBR+skip) output
    let dOut: Float64Array[] = dphi.map((d) => new Float64Array(d));
    const skipGrads = new Map<number, Float64Array[]>();
    for (let li = CONV_LAYERS.length - 1; li >= 0; li--) {
      const [tag, outC, inC] = CONV_LAYERS[li];
      const layer = cache.layers[li];
      const conv = this.convs.get(tag)!;
      // a skip source's output also feeds a later Add; merge that gradient
      const extra = skipGrads.get(tag);
      if (extra) {
        for (let s = 0; s < n; s++) {
          const d = dOut[s];
          const e = extra[s];
          for (let i = 0; i < d.length; i++) d[i] += e[i];
        }
      }
      const src = SKIPS.get(tag);
      if (src !== undefined) {
        // the Add passes the same gradient to the earlier output
        skipGrads.set(src, dOut.map((d) => new Float64Array(d)));
      }
      const bn = this.bns.get(tag);
      let dConvOut: Float64Array[];
      if (bn) {
        const m = n * hw;
        const dGamma = grads.bnGamma.get(tag)!;
        const dBeta = grads.bnBeta.get(tag)!;
        const mean = layer.mean!;
        const invStd = layer.invStd!;
        // ReLU gate: output > 0 (post-BN pre-skip value)
        const dPost: Float64Array[] = [];
        for (let s = 0; s < n; s++) {
          const gated = new Float64Array(outC * hw);
          const xhat = layer.xhat![s];
          const d = dOut[s];
          for (let c = 0; c < outC; c++) {
            const base = c * hw;
            const g = this.bns.get(tag)!.gamma[c];
            const be = this.bns.get(tag)!.beta[c];
            for (let i = 0; i < hw; i++) {
              const pre = g * xhat[base + i] + be;
              gated[base + i] = pre > 0 ? d[base + i] : 0;
            }
          }
          dPost.push(gated);
        }
        // accumulate BN parameter and input gradients per channel
        dConvOut = Array.from({ length: n }, () => new Float64Array(outC * hw));
        for (let c = 0; c < outC; c++) {
          const base = c * hw;
          const g = bn.gamma[c];
          let sumDy = 0;
          let sumDyXhat = 0;
          for (let s = 0; s < n; s++) {
            const d = dPost[s];
            const xhat = layer.xhat![s];
            for (let i = 0; i < hw; i++) {
              sumDy += d[base + i];
              sumDyXhat += d[base + i] * xhat[base + i];
            }
          }
          dGamma[c] += sumDyXhat;
          dBeta[c] += sumDy;
          // dx = (g*invStd/m) * (m*dy - sumDy - xhat*sumDyXhat)
          const k = (g * invStd[c]) / m;
          for (let s = 0; s < n; s++) {
            const d = dPost[s];
            const xhat = layer.xhat![s];
            const dco = dConvOut[s];
            for (let i = 0; i < hw; i++) {
              dco[base + i] = k * (m * d[base + i] - sumDy - xhat[base + i] * sumDyXhat);
            }
          }
        }
      } else {
        dConvOut = dOut;
      }
      const dW = grads.convW.get(tag)!;
      const dB = grads.convB.get(tag)!;
      const dPrev: Float64Array[] = [];
      for (let s = 0; s < n; s++) {
        conv3x3BackwardParams(dConvOut[s], layer.xpadded[s], conv, h, w, dW, dB);
        if (li > 0) {
          const dxp = conv3x3BackwardInput(dConvOut[s], conv, h, w);
          dPrev.push(unpadGrad(dxp, inC, h, w));
        }
      }
      dOut = dPrev;
    }
    return grads;
  }
}
