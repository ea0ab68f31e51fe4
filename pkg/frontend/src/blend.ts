/** CPU reference of the angle-based blending weights (mirrors the shader). */

export function blendWeights(tau: number[]): number[] {
  const k = tau.length;
  if (k < 2) throw new Error("need at least two candidates");
  for (let i = 1; i < k; i++)
    if (tau[i] < tau[i - 1] - 1e-12) throw new Error("angles must be sorted");
  const tk = tau[k - 1];
  const zeros = tau.map((t) => t <= 0);
  if (zeros.some(Boolean)) {
    const nz = zeros.filter(Boolean).length;
    return zeros.map((z) => (z ? 1 / nz : 0));
  }
  const what = tau.map((t, i) => (i === k - 1 ? 0 : (1 / t) * (1 - t / tk)));
  const sum = what.reduce((a, b) => a + b, 0);
  if (sum < 1e-9) return tau.map(() => 1 / k);
  return what.map((w) => w / sum);
}

/** Insertion of (tau, index) pairs keeping the k smallest, sorted ascending. */
export class TopK {
  tau: number[];
  idx: number[];

  constructor(public k: number) {
    this.tau = new Array(k).fill(Infinity);
    this.idx = new Array(k).fill(-1);
  }

  push(t: number, i: number): void {
    if (t >= this.tau[this.k - 1]) return;
    let j = this.k - 1;
    while (j > 0 && this.tau[j - 1] > t) {
      this.tau[j] = this.tau[j - 1];
      this.idx[j] = this.idx[j - 1];
      j--;
    }
    this.tau[j] = t;
    this.idx[j] = i;
  }

  count(): number {
    return this.idx.filter((i) => i >= 0).length;
  }

  /** Final weights with the renderer's fewer-than-k cutoff padding. */
  weights(): number[] {
    const m = this.count();
    if (m === 0) return [];
    if (m === 1) return [1];
    const real = this.tau.slice(0, m);
    const cut = m === this.k ? real[m - 1] : 1.1 * real[m - 1];
    const padded = [...real];
    while (padded.length < this.k) padded.push(cut);
    if (m < this.k) padded[this.k - 1] = cut;
    const w = blendWeights(m === this.k ? real : padded);
    return w.slice(0, m);
  }
}
