/** Training loop: preference pairs in, weights and a margin curve out. */

import * as fs from "node:fs";
import * as path from "node:path";
import { PreferencePair, splitPairs } from "./data.js";
import { SeqProbMode, pairLoss, seqLogProb } from "./loss.js";
import { Adam, Decoder, ModelDims, Tokenizer } from "./model.js";
import { makeRng, shuffle } from "./rng.js";

export interface OrpoConfig {
  beta: number;
  epochs: number;
  learningRate: number;
  batchSize: number;
  heldOutFraction: number;
  seed: number;
  seqProbMode: SeqProbMode;
  embed: number;
  window: number;
  hidden: number;
}

export const DEFAULT_CONFIG: OrpoConfig = {
  beta: 0.7,
  epochs: 2,
  learningRate: 0.003,
  batchSize: 8,
  heldOutFraction: 0.2,
  seed: 0,
  seqProbMode: "mean",
  embed: 12,
  window: 6,
  hidden: 48,
};

export function resolveConfig(partial: Partial<OrpoConfig>): OrpoConfig {
  const cfg = { ...DEFAULT_CONFIG, ...partial };
  if (!(cfg.beta >= 0)) throw new Error("beta must be >= 0");
  if (!(cfg.heldOutFraction > 0 && cfg.heldOutFraction < 1)) {
    throw new Error("heldOutFraction must be in (0, 1)");
  }
  if (cfg.epochs < 1 || cfg.batchSize < 1) throw new Error("epochs and batchSize must be >= 1");
  if (cfg.seqProbMode !== "mean" && cfg.seqProbMode !== "sum") {
    throw new Error(`unknown seqProbMode ${String(cfg.seqProbMode)}`);
  }
  return cfg;
}

export interface UpdateRecord {
  update: number;
  margin: number;
  loss: number;
  nllChosen: number;
}

export interface TrainReport {
  config: OrpoConfig;
  pairsTrain: number;
  pairsHeldOut: number;
  vocabSize: number;
  paramCount: number;
  updates: UpdateRecord[];
  finalHeldOutMargin: number;
  heldOutAccuracy: number;
}

export interface TrainedModel {
  decoder: Decoder;
  tokenizer: Tokenizer;
  config: OrpoConfig;
  report: TrainReport;
}

interface EncodedPair {
  prompt: number[];
  chosen: number[];
  rejected: number[];
}

function encodeAll(pairs: PreferencePair[], tok: Tokenizer): EncodedPair[] {
  return pairs.map((p) => ({
    prompt: tok.encode(p.prompt),
    chosen: tok.encode(p.chosen),
    rejected: tok.encode(p.rejected),
  }));
}

function scorePair(decoder: Decoder, pair: EncodedPair, mode: SeqProbMode) {
  const chosen = { logProbs: decoder.scoreContinuation(pair.prompt, pair.chosen) };
  const rejected = { logProbs: decoder.scoreContinuation(pair.prompt, pair.rejected) };
  return { chosen, rejected, margin: marginOf(chosen.logProbs, rejected.logProbs, mode) };
}

function logOddsFromLogP(lp: number): number {
  const p = Math.min(Math.max(Math.exp(lp), 1e-7), 1 - 1e-7);
  return Math.log(p) - Math.log1p(-p);
}

function marginOf(lpChosen: number[], lpRejected: number[], mode: SeqProbMode): number {
  return (
    logOddsFromLogP(seqLogProb({ logProbs: lpChosen }, mode)) -
    logOddsFromLogP(seqLogProb({ logProbs: lpRejected }, mode))
  );
}

export function evalPreferences(
  decoder: Decoder,
  tokenizer: Tokenizer,
  pairs: PreferencePair[],
  mode: SeqProbMode,
): { margin: number; accuracy: number } {
  if (pairs.length === 0) throw new Error("held-out set is empty");
  let marginSum = 0;
  let wins = 0;
  for (const enc of encodeAll(pairs, tokenizer)) {
    const m = scorePair(decoder, enc, mode).margin;
    marginSum += m;
    if (m > 0) wins += 1;
  }
  return { margin: marginSum / pairs.length, accuracy: wins / pairs.length };
}

export function train(pairs: PreferencePair[], partial: Partial<OrpoConfig> = {}): TrainedModel {
  const cfg = resolveConfig(partial);
  if (pairs.length < 10) {
    throw new Error(`need at least 10 pairs, got ${pairs.length}`);
  }
  const rng = makeRng(cfg.seed);
  const { train: trainPairs, heldOut } = splitPairs(pairs, cfg.heldOutFraction, rng);
  const tokenizer = Tokenizer.fromTexts(
    trainPairs.flatMap((p) => [p.prompt, p.chosen, p.rejected]),
  );
  const dims: ModelDims = {
    vocab: tokenizer.size,
    embed: cfg.embed,
    window: cfg.window,
    hidden: cfg.hidden,
  };
  const decoder = Decoder.init(dims, rng);
  const optimizer = new Adam(decoder.paramCount, cfg.learningRate);
  const encoded = encodeAll(trainPairs, tokenizer);

  const updates: UpdateRecord[] = [];
  let updateIndex = 0;
  for (let epoch = 0; epoch < cfg.epochs; epoch++) {
    const order = shuffle(rng, encoded.map((_, i) => i));
    for (let at = 0; at < order.length; at += cfg.batchSize) {
      const batch = order.slice(at, at + cfg.batchSize);
      decoder.zeroGrads();
      let lossSum = 0;
      let nllSum = 0;
      let marginSum = 0;
      for (const idx of batch) {
        const enc = encoded[idx];
        const { chosen, rejected } = scorePair(decoder, enc, cfg.seqProbMode);
        const pl = pairLoss(chosen, rejected, cfg.beta, cfg.seqProbMode);
        const scale = 1 / batch.length;
        decoder.accumulateGrads(
          enc.prompt,
          enc.chosen,
          pl.gradChosen.map((g) => g * scale),
        );
        decoder.accumulateGrads(
          enc.prompt,
          enc.rejected,
          pl.gradRejected.map((g) => g * scale),
        );
        lossSum += pl.loss;
        nllSum += pl.nllChosen;
        marginSum += pl.margin;
      }
      optimizer.step(decoder.params, decoder.grads);
      updateIndex += 1;
      updates.push({
        update: updateIndex,
        margin: marginSum / batch.length,
        loss: lossSum / batch.length,
        nllChosen: nllSum / batch.length,
      });
    }
  }

  const held = evalPreferences(decoder, tokenizer, heldOut, cfg.seqProbMode);
  const report: TrainReport = {
    config: cfg,
    pairsTrain: trainPairs.length,
    pairsHeldOut: heldOut.length,
    vocabSize: tokenizer.size,
    paramCount: decoder.paramCount,
    updates,
    finalHeldOutMargin: held.margin,
    heldOutAccuracy: held.accuracy,
  };
  return { decoder, tokenizer, config: cfg, report };
}

// ---------------------------------------------------------------------------
// persistence

const WEIGHTS_SCHEMA = 1;

export function saveWeights(model: TrainedModel, file: string): void {
  const doc = {
    schema_version: WEIGHTS_SCHEMA,
    dims: model.decoder.dims,
    seq_prob_mode: model.config.seqProbMode,
    vocab: model.tokenizer.idToChar.slice(2), // specials are implicit
    params: Array.from(model.decoder.params),
  };
  fs.mkdirSync(path.dirname(path.resolve(file)), { recursive: true });
  fs.writeFileSync(file, JSON.stringify(doc));
}

export function loadWeights(file: string): {
  decoder: Decoder;
  tokenizer: Tokenizer;
  seqProbMode: SeqProbMode;
} {
  const doc = JSON.parse(fs.readFileSync(file, "utf8"));
  if (doc.schema_version !== WEIGHTS_SCHEMA) {
    throw new Error(`unsupported weights schema ${String(doc.schema_version)}`);
  }
  const tokenizer = new Tokenizer(doc.vocab as string[]);
  const decoder = new Decoder(doc.dims as ModelDims, Float64Array.from(doc.params as number[]));
  return { decoder, tokenizer, seqProbMode: doc.seq_prob_mode as SeqProbMode };
}

export function marginCurveCsv(report: TrainReport): string {
  const rows = ["update,margin,loss,nll_chosen"];
  for (const u of report.updates) {
    rows.push(`${u.update},${u.margin},${u.loss},${u.nllChosen}`);
  }
  return rows.join("\n") + "\n";
}
