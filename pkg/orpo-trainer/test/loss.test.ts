import { describe, expect, it } from "vitest";
import {
  EPS,
  clampProb,
  logOdds,
  orPenalty,
  orpoLoss,
  pairLoss,
  seqLogProb,
  sigmoid,
  softplusNeg,
} from "../src/loss.js";

// Independent transcription of the penalty for oracle checks: plain
// odds ratio through naive formulas, no shared helpers.
function oraclePenalty(pC: number, pR: number): number {
  const odds = (p: number) => p / (1 - p);
  const z = Math.log(odds(pC) / odds(pR));
  return Math.log(1 + Math.exp(-z));
}

describe("odds-ratio penalty anchors", () => {
  it("equal probabilities give exactly ln 2", () => {
    for (const p of [0.1, 0.5, 0.73, 0.999]) {
      expect(orPenalty(p, p)).toBeCloseTo(Math.LN2, 9);
    }
  });

  it("0.8 vs 0.2 is an odds ratio of 16", () => {
    // -log sigmoid(ln 16) = ln(17/16)
    expect(orPenalty(0.8, 0.2)).toBeCloseTo(Math.log(17 / 16), 12);
    expect(orPenalty(0.8, 0.2)).toBeCloseTo(0.0606, 4);
    expect(orPenalty(0.8, 0.2)).toBeCloseTo(oraclePenalty(0.8, 0.2), 12);
  });

  it("matches the naive formula on random interior points", () => {
    let s = 11;
    const rand = () => {
      s = (s * 16807) % 2147483647;
      return s / 2147483647;
    };
    for (let i = 0; i < 200; i++) {
      const pC = 0.01 + 0.98 * rand();
      const pR = 0.01 + 0.98 * rand();
      expect(orPenalty(pC, pR)).toBeCloseTo(oraclePenalty(pC, pR), 10);
    }
  });

  it("swapping chosen and rejected negates the log-odds argument", () => {
    const z = logOdds(0.81) - logOdds(0.33);
    expect(logOdds(0.33) - logOdds(0.81)).toBeCloseTo(-z, 12);
    expect(orPenalty(0.33, 0.81)).toBeCloseTo(softplusNeg(-z), 12);
  });
});

describe("full loss", () => {
  it("beta 0 reduces to the SFT term exactly", () => {
    expect(orpoLoss(0.8, 0.2, 1.234, 0)).toBe(1.234);
    // even boundary probabilities cannot disturb the SFT-only path
    expect(orpoLoss(1.0, 0.0, 0.5, 0)).toBe(0.5);
  });

  it("adds the weighted penalty otherwise", () => {
    const nll = 2.0;
    expect(orpoLoss(0.6, 0.6, nll, 0.7)).toBeCloseTo(nll + 0.7 * Math.LN2, 12);
  });

  it("rejects negative beta", () => {
    expect(() => orpoLoss(0.5, 0.5, 1, -0.1)).toThrow(/beta/);
  });
});

describe("probability handling", () => {
  it("clamps the boundary with the documented epsilon", () => {
    expect(clampProb(0)).toBe(EPS);
    expect(clampProb(1)).toBe(1 - EPS);
    expect(clampProb(0.4)).toBe(0.4);
  });

  it("rejects values outside [0, 1] and non-finite input", () => {
    expect(() => clampProb(-0.01)).toThrow(/out of/);
    expect(() => clampProb(1.01)).toThrow(/out of/);
    expect(() => clampProb(Number.NaN)).toThrow(/finite/);
  });

  it("keeps log-odds finite at the boundary", () => {
    expect(Number.isFinite(logOdds(0))).toBe(true);
    expect(Number.isFinite(logOdds(1))).toBe(true);
  });
});

describe("sequence log-probability", () => {
  it("mean and sum modes", () => {
    const s = { logProbs: [-1, -2, -3] };
    expect(seqLogProb(s, "mean")).toBeCloseTo(-2, 12);
    expect(seqLogProb(s, "sum")).toBeCloseTo(-6, 12);
  });

  it("refuses empty sequences", () => {
    expect(() => seqLogProb({ logProbs: [] }, "mean")).toThrow(/empty/);
  });
});

describe("pairLoss gradients vs central differences", () => {
  function finiteDiff(
    lpC: number[],
    lpR: number[],
    beta: number,
    mode: "mean" | "sum",
  ): { gradC: number[]; gradR: number[] } {
    const h = 1e-6;
    const at = (c: number[], r: number[]) =>
      pairLoss({ logProbs: c }, { logProbs: r }, beta, mode).loss;
    const gradC = lpC.map((_, i) => {
      const up = lpC.slice();
      const dn = lpC.slice();
      up[i] += h;
      dn[i] -= h;
      return (at(up, lpR) - at(dn, lpR)) / (2 * h);
    });
    const gradR = lpR.map((_, i) => {
      const up = lpR.slice();
      const dn = lpR.slice();
      up[i] += h;
      dn[i] -= h;
      return (at(lpC, up) - at(lpC, dn)) / (2 * h);
    });
    return { gradC, gradR };
  }

  it("agrees within 1e-4 relative error on random tiny inputs", () => {
    let s = 77;
    const rand = () => {
      s = (s * 48271) % 2147483647;
      return s / 2147483647;
    };
    for (const beta of [0, 0.7, 2.0]) {
      for (const mode of ["mean", "sum"] as const) {
        for (let trial = 0; trial < 10; trial++) {
          const lenC = 3 + Math.floor(rand() * 4);
          const lenR = 3 + Math.floor(rand() * 4);
          const lpC = Array.from({ length: lenC }, () => -0.1 - 2.9 * rand());
          const lpR = Array.from({ length: lenR }, () => -0.1 - 2.9 * rand());
          const got = pairLoss({ logProbs: lpC }, { logProbs: lpR }, beta, mode);
          const fd = finiteDiff(lpC, lpR, beta, mode);
          for (let i = 0; i < lenC; i++) {
            const denom = Math.max(Math.abs(fd.gradC[i]), 1e-8);
            expect(Math.abs(got.gradChosen[i] - fd.gradC[i]) / denom).toBeLessThan(1e-4);
          }
          for (let i = 0; i < lenR; i++) {
            const denom = Math.max(Math.abs(fd.gradR[i]), 1e-8);
            expect(Math.abs(got.gradRejected[i] - fd.gradR[i]) / denom).toBeLessThan(1e-4);
          }
        }
      }
    }
  });

  it("margin is the raw log-odds gap", () => {
    const got = pairLoss({ logProbs: [-1.0] }, { logProbs: [-2.0] }, 0.7, "mean");
    expect(got.margin).toBeCloseTo(logOdds(Math.exp(-1)) - logOdds(Math.exp(-2)), 12);
    expect(got.margin).toBeGreaterThan(0);
  });
});

describe("sigmoid", () => {
  it("is stable on both tails", () => {
    expect(sigmoid(800)).toBe(1);
    expect(sigmoid(-800)).toBeCloseTo(0, 12);
    expect(sigmoid(0)).toBe(0.5);
  });
});
