/** The odds-ratio preference objective and its exact gradients.
 *
 * L = nllChosen + beta * (-log sigmoid(z)) with
 * z = log(odds(pChosen) / odds(pRejected)), odds(p) = p / (1 - p).
 *
 * Sequence probabilities live in (0, 1); values at the boundary are
 * clamped with EPS so the log-odds stay finite.  All math is plain
 * float64.
 */

export const EPS = 1e-7;

export function sigmoid(x: number): number {
  // stable on both tails
  if (x >= 0) {
    const e = Math.exp(-x);
    return 1 / (1 + e);
  }
  const e = Math.exp(x);
  return e / (1 + e);
}

/** -log sigmoid(x), computed without overflow for large |x|. */
export function softplusNeg(x: number): number {
  // -log sigmoid(x) = log(1 + exp(-x))
  if (x > 0) return Math.log1p(Math.exp(-x));
  return -x + Math.log1p(Math.exp(x));
}

export function clampProb(p: number): number {
  if (!Number.isFinite(p)) throw new Error(`probability must be finite, got ${p}`);
  if (p < 0 || p > 1) throw new Error(`probability out of [0, 1]: ${p}`);
  return Math.min(Math.max(p, EPS), 1 - EPS);
}

export function logOdds(p: number): number {
  const q = clampProb(p);
  return Math.log(q) - Math.log1p(-q);
}

/** Odds-ratio penalty alone: -log sigmoid(logOdds(p+) - logOdds(p-)). */
export function orPenalty(pChosen: number, pRejected: number): number {
  return softplusNeg(logOdds(pChosen) - logOdds(pRejected));
}

/** Full loss: SFT term plus beta-weighted odds-ratio penalty. */
export function orpoLoss(
  pChosen: number,
  pRejected: number,
  nllChosen: number,
  beta: number,
): number {
  if (beta < 0) throw new Error("beta must be >= 0");
  if (beta === 0) return nllChosen; // pure SFT boundary, no clamp side effects
  return nllChosen + beta * orPenalty(pChosen, pRejected);
}

export interface SequenceScore {
  /** per-token log-likelihoods of the realized tokens */
  logProbs: number[];
}

export type SeqProbMode = "mean" | "sum";

/** Sequence log-probability under the configured normalization. */
export function seqLogProb(score: SequenceScore, mode: SeqProbMode): number {
  if (score.logProbs.length === 0) throw new Error("empty sequence");
  const total = score.logProbs.reduce((s, x) => s + x, 0);
  return mode === "mean" ? total / score.logProbs.length : total;
}

export interface PairLoss {
  loss: number;
  nllChosen: number;
  /** log-odds-ratio gap z; the reward margin is its mean over pairs */
  margin: number;
  /** d loss / d logProb_t for each chosen token */
  gradChosen: number[];
  /** d loss / d logProb_t for each rejected token */
  gradRejected: number[];
}

/** Loss and exact gradients w.r.t. the per-token log-likelihoods.
 *
 * Lets the model backpropagate through its own log-softmax without this
 * module knowing anything about logits.  Gradients are zero through the
 * probability clamp (the clamped region is flat by definition).
 */
export function pairLoss(
  chosen: SequenceScore,
  rejected: SequenceScore,
  beta: number,
  mode: SeqProbMode,
): PairLoss {
  if (beta < 0) throw new Error("beta must be >= 0");
  const lpC = seqLogProb(chosen, mode);
  const lpR = seqLogProb(rejected, mode);
  const pC = Math.exp(lpC);
  const pR = Math.exp(lpR);
  const nll = -lpC;

  const z = logOdds(pC) - logOdds(pR);
  const loss = beta === 0 ? nll : nll + beta * softplusNeg(z);

  // dz/dlp = 1 / (1 - p) when p is inside the clamp, else 0
  const cC = clampProb(pC);
  const cR = clampProb(pR);
  const dzC = pC > EPS && pC < 1 - EPS ? 1 / (1 - cC) : 0;
  const dzR = pR > EPS && pR < 1 - EPS ? -1 / (1 - cR) : 0;
  const dLdz = beta === 0 ? 0 : -beta * sigmoid(-z);

  const dLdlpC = -1 + dLdz * dzC;
  const dLdlpR = dLdz * dzR;
  const scaleC = mode === "mean" ? 1 / chosen.logProbs.length : 1;
  const scaleR = mode === "mean" ? 1 / rejected.logProbs.length : 1;
  return {
    loss,
    nllChosen: nll,
    margin: z,
    gradChosen: chosen.logProbs.map(() => dLdlpC * scaleC),
    gradRejected: rejected.logProbs.map(() => dLdlpR * scaleR),
  };
}
