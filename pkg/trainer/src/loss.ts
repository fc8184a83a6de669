/** Chroma-residual L1 objective.
 *
 * Each supervision pairs one chroma channel (red or blue) with green; the
 * network output phi must match t = (z_c - z_G) - (u_c - u_G), so the loss is
 * mean |phi - t| per sample, averaged over the batch.  Red and blue are
 * symmetric, so every simulated pair yields two supervisions.
 */

export interface LossResult {
  value: number;
  /** dL/dphi per sample */
  grad: Float64Array[];
}

export function residualL1(phi: Float64Array[], targets: Float64Array[]): LossResult {
  const n = phi.length;
  let total = 0;
  const grad: Float64Array[] = [];
  for (let s = 0; s < n; s++) {
    const p = phi[s];
    const t = targets[s];
    const m = p.length;
    const g = new Float64Array(m);
    let acc = 0;
    for (let i = 0; i < m; i++) {
      const d = p[i] - t[i];
      acc += Math.abs(d);
      g[i] = (d > 0 ? 1 : d < 0 ? -1 : 0) / (m * n);
    }
    total += acc / m;
    grad.push(g);
  }
  return { value: total / n, grad };
}
