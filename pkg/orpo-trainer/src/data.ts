/** Loader for the mined preference dataset (JSONL, one pair per line).
 *
 * The file contract: each line carries prompt/chosen/rejected texts,
 * both Q values, the miner's score, and tree/node provenance.  Anything
 * off-schema is a hard error naming the line, because silently dropping
 * records would bias training.
 */

import * as fs from "node:fs";
import { Rng, shuffle } from "./rng.js";

export interface PreferencePair {
  prompt: string;
  chosen: string;
  rejected: string;
  qChosen: number;
  qRejected: number;
  score: number;
  treeId: string;
  parentId: number;
}

const STRING_FIELDS = ["prompt", "chosen", "rejected", "tree_id"] as const;
const NUMBER_FIELDS = ["q_chosen", "q_rejected", "score", "parent_id"] as const;

function parsePair(raw: unknown, where: string): PreferencePair {
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new Error(`${where}: expected a JSON object`);
  }
  const rec = raw as Record<string, unknown>;
  for (const f of STRING_FIELDS) {
    if (typeof rec[f] !== "string") throw new Error(`${where}: field ${f} must be a string`);
  }
  for (const f of NUMBER_FIELDS) {
    const v = rec[f];
    if (typeof v !== "number" || !Number.isFinite(v)) {
      throw new Error(`${where}: field ${f} must be a finite number`);
    }
  }
  if ((rec.chosen as string).length === 0 || (rec.rejected as string).length === 0) {
    throw new Error(`${where}: chosen and rejected must be non-empty`);
  }
  if (rec.chosen === rec.rejected) {
    throw new Error(`${where}: chosen equals rejected`);
  }
  return {
    prompt: rec.prompt as string,
    chosen: rec.chosen as string,
    rejected: rec.rejected as string,
    qChosen: rec.q_chosen as number,
    qRejected: rec.q_rejected as number,
    score: rec.score as number,
    treeId: rec.tree_id as string,
    parentId: rec.parent_id as number,
  };
}

export function parseDataset(text: string, source = "<memory>"): PreferencePair[] {
  const pairs: PreferencePair[] = [];
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (line === "") continue;
    let doc: unknown;
    try {
      doc = JSON.parse(line);
    } catch {
      throw new Error(`${source}:${i + 1}: not valid JSON`);
    }
    pairs.push(parsePair(doc, `${source}:${i + 1}`));
  }
  if (pairs.length === 0) throw new Error(`${source}: dataset is empty`);
  return pairs;
}

export function loadDataset(path: string): PreferencePair[] {
  return parseDataset(fs.readFileSync(path, "utf8"), path);
}

export interface Split {
  train: PreferencePair[];
  heldOut: PreferencePair[];
}

/** Deterministic shuffle-split; held-out fraction must leave both sides non-empty. */
export function splitPairs(pairs: PreferencePair[], heldOutFraction: number, rng: Rng): Split {
  if (!(heldOutFraction > 0 && heldOutFraction < 1)) {
    throw new Error("heldOutFraction must be in (0, 1)");
  }
  const order = shuffle(rng, pairs.map((_, i) => i));
  const nHeld = Math.max(1, Math.round(pairs.length * heldOutFraction));
  if (nHeld >= pairs.length) throw new Error("held-out split would consume every pair");
  const heldOut = order.slice(0, nHeld).map((i) => pairs[i]);
  const train = order.slice(nHeld).map((i) => pairs[i]);
  return { train, heldOut };
}
