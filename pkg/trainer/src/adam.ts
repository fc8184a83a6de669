/** Adam with bias correction, over the model's named parameter buffers. */

import { FringeNet, Gradients, BN_TAGS, CONV_LAYERS } from "./model.js";

interface Slot {
  m: Float64Array;
  v: Float64Array;
}

export class Adam {
  lr: number;
  beta1: number;
  beta2: number;
  eps: number;
  private t = 0;
  private slots = new Map<string, Slot>();

  constructor(lr = 3e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8) {
    this.lr = lr;
    this.beta1 = beta1;
    this.beta2 = beta2;
    this.eps = eps;
  }

  private slot(key: string, size: number): Slot {
    let s = this.slots.get(key);
    if (!s) {
      s = { m: new Float64Array(size), v: new Float64Array(size) };
      this.slots.set(key, s);
    }
    return s;
  }

  private apply(key: string, param: Float64Array, grad: Float64Array): void {
    const { m, v } = this.slot(key, param.length);
    const b1 = this.beta1;
    const b2 = this.beta2;
    const correct1 = 1 - Math.pow(b1, this.t);
    const correct2 = 1 - Math.pow(b2, this.t);
    for (let i = 0; i < param.length; i++) {
      m[i] = b1 * m[i] + (1 - b1) * grad[i];
      v[i] = b2 * v[i] + (1 - b2) * grad[i] * grad[i];
      const mhat = m[i] / correct1;
      const vhat = v[i] / correct2;
      param[i] -= (this.lr * mhat) / (Math.sqrt(vhat) + this.eps);
    }
  }

  step(net: FringeNet, grads: Gradients): void {
    this.t += 1;
    for (const [tag] of CONV_LAYERS) {
      const conv = net.convs.get(tag)!;
      this.apply(`conv${tag}.w`, conv.w, grads.convW.get(tag)!);
      this.apply(`conv${tag}.b`, conv.b, grads.convB.get(tag)!);
      if (BN_TAGS.has(tag)) {
        const bn = net.bns.get(tag)!;
        this.apply(`bn${tag}.gamma`, bn.gamma, grads.bnGamma.get(tag)!);
        this.apply(`bn${tag}.beta`, bn.beta, grads.bnBeta.get(tag)!);
      }
    }
  }
}

/** Halve the learning rate when validation loss stalls for `patience` checks. */
export class PlateauScheduler {
  best = Infinity;
  stale = 0;

  constructor(
    private optimizer: Adam,
    private factor = 0.5,
    private patience = 10,
    private minLr = 1e-6,
  ) {}

  observe(valLoss: number): void {
    if (valLoss < this.best - 1e-9) {
      this.best = valLoss;
      this.stale = 0;
      return;
    }
    this.stale += 1;
    if (this.stale >= this.patience) {
      this.optimizer.lr = Math.max(this.minLr, this.optimizer.lr * this.factor);
      this.stale = 0;
    }
  }
}
