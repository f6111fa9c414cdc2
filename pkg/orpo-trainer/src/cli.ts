#!/usr/bin/env node
/** Command-line front end: synth, train, eval.
 *
 * Mirrors the conventions of the search package that produces the
 * dataset: every command prints one JSON document on stdout and exits 1
 * with an error line on stderr when anything is wrong.  Argument
 * parsing is node's own util.parseArgs; no runtime dependencies.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { parseArgs } from "node:util";
import { loadDataset } from "./data.js";
import { plantedPairs, toJsonl } from "./synthetic.js";
import {
  OrpoConfig,
  evalPreferences,
  loadWeights,
  marginCurveCsv,
  saveWeights,
  train,
} from "./train.js";

const USAGE = `usage:
  orpo-trainer synth --out FILE [--pairs N] [--seed N]
  orpo-trainer train --data FILE --out DIR [--config FILE] [--beta X] [--epochs N] [--seed N]
  orpo-trainer eval  --weights FILE --data FILE`;

function emit(doc: unknown): void {
  process.stdout.write(JSON.stringify(doc, null, 2) + "\n");
}

function needString(values: Record<string, unknown>, name: string): string {
  const v = values[name];
  if (typeof v !== "string" || v === "") throw new Error(`--${name} is required\n${USAGE}`);
  return v;
}

function optNumber(values: Record<string, unknown>, name: string): number | undefined {
  const v = values[name];
  if (v === undefined) return undefined;
  const n = Number(v);
  if (!Number.isFinite(n)) throw new Error(`--${name} must be a number, got ${String(v)}`);
  return n;
}

function cmdSynth(argv: string[]): void {
  const { values } = parseArgs({
    args: argv,
    options: {
      out: { type: "string" },
      pairs: { type: "string" },
      seed: { type: "string" },
    },
  });
  const out = needString(values, "out");
  const pairs = plantedPairs(optNumber(values, "pairs") ?? 400, optNumber(values, "seed") ?? 0);
  fs.mkdirSync(path.dirname(path.resolve(out)), { recursive: true });
  fs.writeFileSync(out, toJsonl(pairs));
  emit({ dataset: out, pairs: pairs.length });
}

function cmdTrain(argv: string[]): void {
  const { values } = parseArgs({
    args: argv,
    options: {
      data: { type: "string" },
      out: { type: "string" },
      config: { type: "string" },
      beta: { type: "string" },
      epochs: { type: "string" },
      seed: { type: "string" },
    },
  });
  const data = needString(values, "data");
  const outDir = needString(values, "out");
  const overrides: Partial<OrpoConfig> = values.config
    ? (JSON.parse(fs.readFileSync(values.config, "utf8")) as Partial<OrpoConfig>)
    : {};
  const beta = optNumber(values, "beta");
  const epochs = optNumber(values, "epochs");
  const seed = optNumber(values, "seed");
  if (beta !== undefined) overrides.beta = beta;
  if (epochs !== undefined) overrides.epochs = epochs;
  if (seed !== undefined) overrides.seed = seed;

  const model = train(loadDataset(data), overrides);
  fs.mkdirSync(outDir, { recursive: true });
  const weights = path.join(outDir, "weights.json");
  const reportFile = path.join(outDir, "report.json");
  const curve = path.join(outDir, "margin_curve.csv");
  saveWeights(model, weights);
  fs.writeFileSync(reportFile, JSON.stringify(model.report, null, 2) + "\n");
  fs.writeFileSync(curve, marginCurveCsv(model.report));
  emit({
    weights,
    report: reportFile,
    margin_curve: curve,
    updates: model.report.updates.length,
    held_out_accuracy: model.report.heldOutAccuracy,
    final_held_out_margin: model.report.finalHeldOutMargin,
  });
}

function cmdEval(argv: string[]): void {
  const { values } = parseArgs({
    args: argv,
    options: {
      weights: { type: "string" },
      data: { type: "string" },
    },
  });
  const { decoder, tokenizer, seqProbMode } = loadWeights(needString(values, "weights"));
  const result = evalPreferences(
    decoder,
    tokenizer,
    loadDataset(needString(values, "data")),
    seqProbMode,
  );
  emit({ margin: result.margin, accuracy: result.accuracy });
}

export function main(argv: string[]): number {
  try {
    const [command, ...rest] = argv;
    if (command === "synth") cmdSynth(rest);
    else if (command === "train") cmdTrain(rest);
    else if (command === "eval") cmdEval(rest);
    else throw new Error(`unknown command ${String(command)}\n${USAGE}`);
    return 0;
  } catch (err) {
    process.stderr.write(`error: ${err instanceof Error ? err.message : String(err)}\n`);
    return 1;
  }
}

const entry = process.argv[1] ? path.resolve(process.argv[1]) : "";
if (import.meta.url === `file://${entry}`) {
  process.exitCode = main(process.argv.slice(2));
}
