/** Synthetic preference pairs with a planted, learnable pattern.
 *
 * Every chosen continuation is a short motif repeated to length; the
 * rejected side is a character-for-character shuffle of the chosen
 * text.  Both sides therefore share the same character counts, so an
 * untrained model has no unigram shortcut and sits at chance, while a
 * trained one can key on the periodic structure.
 */

import { PreferencePair } from "./data.js";
import { Rng, makeRng, randInt, shuffle } from "./rng.js";

const ALPHABET = "abcdefghijkl";

function motifRepeat(rng: Rng, motifLen: number, total: number): string {
  let motif = "";
  do {
    motif = "";
    for (let i = 0; i < motifLen; i++) motif += ALPHABET[randInt(rng, ALPHABET.length)];
  } while (new Set(motif).size < 2); // single-char motifs cannot be deranged
  let out = "";
  while (out.length < total) out += motif;
  return out.slice(0, total);
}

function shuffled(rng: Rng, text: string): string {
  for (let attempt = 0; attempt < 50; attempt++) {
    const s = shuffle(rng, text.split("")).join("");
    if (s !== text) return s;
  }
  throw new Error("could not derange text; motif is degenerate");
}

export function plantedPairs(n: number, seed: number): PreferencePair[] {
  if (n < 1) throw new Error("need at least one pair");
  const rng = makeRng(seed);
  const pairs: PreferencePair[] = [];
  for (let i = 0; i < n; i++) {
    const motifLen = 2 + randInt(rng, 3); // 2..4, always inside the context window
    const length = 24 + randInt(rng, 17); // 24..40 chars
    const chosen = motifRepeat(rng, motifLen, length);
    const rejected = shuffled(rng, chosen);
    const q = 0.6 + 0.3 * rng();
    pairs.push({
      prompt: `pair ${i}: `,
      chosen,
      rejected,
      qChosen: q,
      qRejected: q - 0.2,
      score: q,
      treeId: "synthetic",
      parentId: i,
    });
  }
  return pairs;
}

export function toJsonl(pairs: PreferencePair[]): string {
  return (
    pairs
      .map((p) =>
        JSON.stringify({
          prompt: p.prompt,
          chosen: p.chosen,
          rejected: p.rejected,
          q_chosen: p.qChosen,
          q_rejected: p.qRejected,
          score: p.score,
          tree_id: p.treeId,
          parent_id: p.parentId,
        }),
      )
      .join("\n") + "\n"
  );
}
