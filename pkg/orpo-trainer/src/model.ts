/** Tiny character-level decoder with hand-written gradients.
 *
 * A fixed context window of embedded characters feeds one tanh layer,
 * which predicts the next character.  Small on purpose: the point is
 * training dynamics under the preference objective, not language
 * quality.  Everything is float64 typed arrays; no tensor library.
 */

import { Rng, uniform } from "./rng.js";

export const BOS = 0;
export const UNK = 1;

export interface ModelDims {
  vocab: number;
  embed: number;
  window: number;
  hidden: number;
}

export class Tokenizer {
  readonly charToId: Map<string, number>;
  readonly idToChar: string[];

  constructor(chars: Iterable<string>) {
    this.idToChar = ["<bos>", "<unk>"];
    this.charToId = new Map();
    for (const ch of chars) {
      if (!this.charToId.has(ch)) {
        this.charToId.set(ch, this.idToChar.length);
        this.idToChar.push(ch);
      }
    }
  }

  static fromTexts(texts: string[]): Tokenizer {
    const seen = new Set<string>();
    for (const t of texts) for (const ch of t) seen.add(ch);
    return new Tokenizer([...seen].sort());
  }

  get size(): number {
    return this.idToChar.length;
  }

  encode(text: string): number[] {
    const out: number[] = [];
    for (const ch of text) out.push(this.charToId.get(ch) ?? UNK);
    return out;
  }
}

/** Offsets of each weight block inside the flat parameter vector. */
function layout(d: ModelDims) {
  const embed = 0;
  const w1 = embed + d.vocab * d.embed;
  const b1 = w1 + d.window * d.embed * d.hidden;
  const w2 = b1 + d.hidden;
  const b2 = w2 + d.hidden * d.vocab;
  return { embed, w1, b1, w2, b2, total: b2 + d.vocab };
}

export class Decoder {
  readonly dims: ModelDims;
  readonly params: Float64Array;
  readonly grads: Float64Array;
  private readonly off: ReturnType<typeof layout>;

  constructor(dims: ModelDims, params?: Float64Array) {
    this.dims = dims;
    this.off = layout(dims);
    this.params = params ?? new Float64Array(this.off.total);
    if (this.params.length !== this.off.total) {
      throw new Error(
        `parameter vector has ${this.params.length} entries, dims need ${this.off.total}`,
      );
    }
    this.grads = new Float64Array(this.off.total);
  }

  static init(dims: ModelDims, rng: Rng): Decoder {
    const m = new Decoder(dims);
    for (let i = 0; i < m.params.length; i++) {
      m.params[i] = uniform(rng, -0.08, 0.08);
    }
    return m;
  }

  get paramCount(): number {
    return this.off.total;
  }

  zeroGrads(): void {
    this.grads.fill(0);
  }

  /** Left-padded context ids for position t of a token id sequence. */
  private context(ids: number[], t: number): number[] {
    const w = this.dims.window;
    const ctx = new Array<number>(w);
    for (let k = 0; k < w; k++) {
      const j = t - w + k;
      ctx[k] = j >= 0 ? ids[j] : BOS;
    }
    return ctx;
  }

  /** Log-softmax over next-token logits for one context. */
  forward(ctx: number[]): { logProbs: Float64Array; hidden: Float64Array; x: Float64Array } {
    const { embed, window, hidden, vocab } = this.dims;
    const p = this.params;
    const o = this.off;
    const xin = new Float64Array(window * embed);
    for (let k = 0; k < window; k++) {
      const base = o.embed + ctx[k] * embed;
      for (let e = 0; e < embed; e++) xin[k * embed + e] = p[base + e];
    }
    const h = new Float64Array(hidden);
    for (let j = 0; j < hidden; j++) {
      let s = p[o.b1 + j];
      const row = o.w1 + j * window * embed;
      for (let i = 0; i < xin.length; i++) s += p[row + i] * xin[i];
      h[j] = Math.tanh(s);
    }
    const logits = new Float64Array(vocab);
    let max = -Infinity;
    for (let v = 0; v < vocab; v++) {
      let s = p[o.b2 + v];
      const col = o.w2 + v * hidden;
      for (let j = 0; j < hidden; j++) s += p[col + j] * h[j];
      logits[v] = s;
      if (s > max) max = s;
    }
    let z = 0;
    for (let v = 0; v < vocab; v++) z += Math.exp(logits[v] - max);
    const logZ = max + Math.log(z);
    for (let v = 0; v < vocab; v++) logits[v] -= logZ; // now log-probs
    return { logProbs: logits, hidden: h, x: xin };
  }

  /** Per-token log-likelihood of `cont` given `prompt` as prefix. */
  scoreContinuation(prompt: number[], cont: number[]): number[] {
    const ids = prompt.concat(cont);
    const out: number[] = [];
    for (let t = prompt.length; t < ids.length; t++) {
      out.push(this.forward(this.context(ids, t)).logProbs[ids[t]]);
    }
    return out;
  }

  /** Accumulate d(loss)/d(params) given d(loss)/d(logProb of target).
   *
   * One scalar per continuation token; positions with grad 0 are
   * skipped entirely.
   */
  accumulateGrads(prompt: number[], cont: number[], dLdLogProb: number[]): void {
    const { embed, window, hidden, vocab } = this.dims;
    if (dLdLogProb.length !== cont.length) {
      throw new Error("one gradient per continuation token required");
    }
    const ids = prompt.concat(cont);
    const p = this.params;
    const g = this.grads;
    const o = this.off;
    for (let t = prompt.length; t < ids.length; t++) {
      const gScale = dLdLogProb[t - prompt.length];
      if (gScale === 0) continue;
      const ctx = this.context(ids, t);
      const { logProbs, hidden: h, x: xin } = this.forward(ctx);
      const target = ids[t];
      // d logP[target] / d logit_v = delta(v, target) - softmax_v
      const dHidden = new Float64Array(hidden);
      for (let v = 0; v < vocab; v++) {
        const dLogit = gScale * ((v === target ? 1 : 0) - Math.exp(logProbs[v]));
        if (dLogit === 0) continue;
        g[o.b2 + v] += dLogit;
        const col = o.w2 + v * hidden;
        for (let j = 0; j < hidden; j++) {
          g[col + j] += dLogit * h[j];
          dHidden[j] += dLogit * p[col + j];
        }
      }
      for (let j = 0; j < hidden; j++) {
        const dPre = dHidden[j] * (1 - h[j] * h[j]);
        if (dPre === 0) continue;
        g[o.b1 + j] += dPre;
        const row = o.w1 + j * window * embed;
        for (let i = 0; i < xin.length; i++) g[row + i] += dPre * xin[i];
        for (let k = 0; k < window; k++) {
          const base = o.embed + ctx[k] * embed;
          for (let e = 0; e < embed; e++) {
            g[base + e] += dPre * p[row + k * embed + e];
          }
        }
      }
    }
  }
}

/** Adam with bias correction; state lives alongside the model. */
export class Adam {
  private readonly m: Float64Array;
  private readonly v: Float64Array;
  private t = 0;

  constructor(
    size: number,
    readonly lr: number,
    readonly beta1 = 0.9,
    readonly beta2 = 0.999,
    readonly eps = 1e-8,
  ) {
    this.m = new Float64Array(size);
    this.v = new Float64Array(size);
  }

  step(params: Float64Array, grads: Float64Array): void {
    this.t += 1;
    const c1 = 1 - Math.pow(this.beta1, this.t);
    const c2 = 1 - Math.pow(this.beta2, this.t);
    for (let i = 0; i < params.length; i++) {
      const g = grads[i];
      this.m[i] = this.beta1 * this.m[i] + (1 - this.beta1) * g;
      this.v[i] = this.beta2 * this.v[i] + (1 - this.beta2) * g * g;
      params[i] -= (this.lr * (this.m[i] / c1)) / (Math.sqrt(this.v[i] / c2) + this.eps);
    }
  }
}
