import * as fs from "node:fs";
import * as path from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";
import { loadDataset, parseDataset, splitPairs } from "../src/data.js";
import { makeRng } from "../src/rng.js";
import { plantedPairs, toJsonl } from "../src/synthetic.js";

const FIXTURE = fileURLToPath(new URL("./fixtures/mined.jsonl", import.meta.url));

const GOOD_LINE = JSON.stringify({
  prompt: "Premise: a storm.\n",
  chosen: "The dam breaks.",
  rejected: "Nothing happens.",
  q_chosen: 0.8,
  q_rejected: 0.4,
  score: 0.6,
  tree_id: "abc123def456",
  parent_id: 7,
});

describe("dataset parsing", () => {
  it("loads the fixture mined by the search package", () => {
    const pairs = loadDataset(FIXTURE);
    expect(pairs.length).toBeGreaterThanOrEqual(10);
    for (const p of pairs) {
      expect(p.chosen).not.toBe(p.rejected);
      expect(p.qChosen).toBeGreaterThan(p.qRejected);
      expect(Number.isInteger(p.parentId)).toBe(true);
      expect(p.treeId).toMatch(/^[0-9a-f]+$/);
    }
  });

  it("accepts a well-formed line and maps the fields", () => {
    const [p] = parseDataset(GOOD_LINE + "\n");
    expect(p.qChosen).toBe(0.8);
    expect(p.parentId).toBe(7);
    expect(p.prompt).toContain("storm");
  });

  it("names the offending line on schema errors", () => {
    const missing = JSON.stringify({ prompt: "x", chosen: "a", rejected: "b" });
    expect(() => parseDataset(GOOD_LINE + "\n" + missing + "\n", "d.jsonl")).toThrow(/d\.jsonl:2/);
  });

  it("rejects wrong field types", () => {
    const bad = GOOD_LINE.replace('"q_chosen":0.8', '"q_chosen":"high"');
    expect(() => parseDataset(bad)).toThrow(/q_chosen/);
  });

  it("rejects identical chosen and rejected text", () => {
    const bad = GOOD_LINE.replace('"Nothing happens."', '"The dam breaks."');
    expect(() => parseDataset(bad)).toThrow(/equals/);
  });

  it("rejects non-object lines and broken JSON", () => {
    expect(() => parseDataset("[1, 2]\n")).toThrow(/object/);
    expect(() => parseDataset("{not json\n")).toThrow(/not valid JSON/);
  });

  it("rejects an empty dataset", () => {
    expect(() => parseDataset("\n\n")).toThrow(/empty/);
  });

  it("round-trips the synthetic writer", () => {
    const pairs = plantedPairs(25, 3);
    const back = parseDataset(toJsonl(pairs));
    expect(back).toEqual(pairs);
  });
});

describe("held-out split", () => {
  const pairs = plantedPairs(50, 1);

  it("is deterministic for a seed and disjoint", () => {
    const a = splitPairs(pairs.slice(), 0.2, makeRng(5));
    const b = splitPairs(pairs.slice(), 0.2, makeRng(5));
    expect(a.heldOut).toEqual(b.heldOut);
    expect(a.train.length + a.heldOut.length).toBe(pairs.length);
    const heldSet = new Set(a.heldOut.map((p) => p.parentId));
    for (const p of a.train) expect(heldSet.has(p.parentId)).toBe(false);
  });

  it("changes with the seed", () => {
    const a = splitPairs(pairs.slice(), 0.2, makeRng(5));
    const c = splitPairs(pairs.slice(), 0.2, makeRng(6));
    expect(JSON.stringify(a.heldOut)).not.toBe(JSON.stringify(c.heldOut));
  });

  it("rejects fractions outside (0, 1)", () => {
    expect(() => splitPairs(pairs.slice(), 0, makeRng(1))).toThrow(/\(0, 1\)/);
    expect(() => splitPairs(pairs.slice(), 1, makeRng(1))).toThrow(/\(0, 1\)/);
  });

  it("refuses to hold out every pair", () => {
    expect(() => splitPairs(pairs.slice(0, 2), 0.9, makeRng(1))).toThrow(/every pair/);
  });
});

describe("planted generator", () => {
  it("chosen is periodic, rejected is a permutation of it", () => {
    for (const p of plantedPairs(30, 9)) {
      const sortChars = (s: string) => s.split("").sort().join("");
      expect(sortChars(p.chosen)).toBe(sortChars(p.rejected));
      expect(p.chosen).not.toBe(p.rejected);
      // periodicity: some shift 2..4 reproduces the text
      const periodic = [2, 3, 4].some((k) =>
        p.chosen.split("").every((ch, i) => i < k || ch === p.chosen[i - k]),
      );
      expect(periodic).toBe(true);
    }
  });

  it("writes temp files loadable through the file API", () => {
    const file = path.join(fs.mkdtempSync("/tmp/orpo-data-"), "s.jsonl");
    fs.writeFileSync(file, toJsonl(plantedPairs(12, 0)));
    expect(loadDataset(file)).toHaveLength(12);
    fs.rmSync(path.dirname(file), { recursive: true, force: true });
  });
});
