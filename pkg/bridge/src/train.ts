/**
 * Stochastic gradient descent with momentum over synthesized samples.
 *
 * Samples come from a synthesis output directory (one subdirectory per
 * sample); the manifest that produced them supplies mean_pixel and the
 * category vocabulary. Samples failing the visibility floor are rejected at
 * pool-building time, so every batch draw lands on an accepted example;
 * the redraw happens once, up front, instead of per batch.
 *
 * The objective per batch is the mean over instances of the masked,
 * weighted pixel NLL, plus L2 weight decay over all parameters. One PRNG
 * seeds the weights and another the batch draws, so (data, options, seed)
 * reproduces the loss log byte for byte on a single-threaded backend.
 */

import * as tf from '@tensorflow/tfjs';
import * as fs from 'fs';
import * as path from 'path';
import { BackendName, initBackend } from './backend';
import { batchMaskedWeightedLoss } from './loss';
import { DEFAULTS, Model, ModelConfig, categoryIndex, disposeModel, forward, initModel, saveCheckpoint } from './model';
import { ModalSource, PreparedExample, listSampleDirs, loadManifestInfo, loadSample, prepareExample } from './samples';
import { Rng } from './rng';

export interface TrainOptions {
  dataDir: string;
  manifestPath: string;
  outDir: string;
  iterations?: number;
  batchSize?: number;
  learningRate?: number;
  weightDecay?: number;
  momentum?: number;
  seed?: number;
  netRes?: number;
  embedDim?: number;
  stageWidths?: [number, number, number];
  projWidth?: number;
  modalSource?: ModalSource;
  backend?: BackendName;
}

export const TRAIN_DEFAULTS = {
  iterations: 500,
  batchSize: 32,
  learningRate: 1e-5,
  weightDecay: 1e-3,
  momentum: 0.9,
  seed: 0,
  modalSource: 'constant' as ModalSource,
  backend: 'wasm' as BackendName,
};

export interface TrainResult {
  checkpointPath: string;
  lossLogPath: string;
  /** Per-iteration data loss (decay term excluded). */
  losses: number[];
  backend: string;
  poolSize: number;
  rejected: number;
}

interface Batch {
  input: tf.Tensor4D;
  targets: tf.Tensor3D;
  weights: tf.Tensor1D;
  categoryIdx: number[];
}

function buildBatch(
  pool: PreparedExample[], indices: number[], config: ModelConfig,
): Batch {
  const r = config.netRes;
  const b = indices.length;
  const input = new Float32Array(b * r * r * 4);
  const targets = new Int32Array(b * r * r);
  const weights = new Float32Array(b);
  const categoryIdx: number[] = [];
  for (let i = 0; i < b; i++) {
    const ex = pool[indices[i]];
    input.set(ex.input, i * r * r * 4);
    targets.set(ex.targetLabels, i * r * r);
    weights[i] = ex.lossWeight;
    categoryIdx.push(categoryIndex(config, ex.category));
  }
  return {
    input: tf.tensor4d(input, [b, r, r, 4]),
    targets: tf.tensor3d(targets, [b, r, r], 'int32'),
    weights: tf.tensor1d(weights),
    categoryIdx,
  };
}

function l2Penalty(model: Model, weightDecay: number): tf.Scalar {
  const sums = Object.values(model.vars).map((v) => tf.sum(tf.mul(v, v)));
  return tf.mul(tf.addN(sums), 0.5 * weightDecay) as tf.Scalar;
}

export async function trainModel(options: TrainOptions): Promise<TrainResult> {
  const opts = {
    dataDir: options.dataDir,
    manifestPath: options.manifestPath,
    outDir: options.outDir,
    iterations: options.iterations ?? TRAIN_DEFAULTS.iterations,
    batchSize: options.batchSize ?? TRAIN_DEFAULTS.batchSize,
    learningRate: options.learningRate ?? TRAIN_DEFAULTS.learningRate,
    weightDecay: options.weightDecay ?? TRAIN_DEFAULTS.weightDecay,
    momentum: options.momentum ?? TRAIN_DEFAULTS.momentum,
    seed: options.seed ?? TRAIN_DEFAULTS.seed,
    netRes: options.netRes ?? DEFAULTS.netRes,
    embedDim: options.embedDim ?? DEFAULTS.embedDim,
    stageWidths: options.stageWidths ?? DEFAULTS.stageWidths,
    projWidth: options.projWidth ?? DEFAULTS.projWidth,
    modalSource: options.modalSource ?? TRAIN_DEFAULTS.modalSource,
    backend: options.backend ?? TRAIN_DEFAULTS.backend,
  };
  if (opts.iterations < 1) throw new Error('iterations must be at least 1');
  for (const [name, v] of Object.entries({
    batchSize: opts.batchSize, learningRate: opts.learningRate,
    weightDecay: opts.weightDecay, momentum: opts.momentum,
  })) {
    if (!(v > 0)) throw new Error(`${name} must be positive, got ${v}`);
  }
  const backend = await initBackend(opts.backend);
  const manifest = loadManifestInfo(opts.manifestPath);

  const dirs = listSampleDirs(opts.dataDir);
  if (dirs.length === 0) throw new Error(`no sample directories under ${opts.dataDir}`);
  const pool: PreparedExample[] = [];
  let rejected = 0;
  for (const dir of dirs) {
    const prepared = prepareExample(
      loadSample(dir), opts.netRes, manifest.meanPixel, opts.modalSource,
    );
    if (prepared === null) rejected += 1;
    else pool.push(prepared);
  }
  if (pool.length === 0) {
    throw new Error(`every sample under ${opts.dataDir} was rejected`);
  }

  const config: ModelConfig = {
    netRes: opts.netRes,
    embedDim: opts.embedDim,
    stageWidths: opts.stageWidths,
    projWidth: opts.projWidth,
    categories: manifest.categories,
    meanPixel: manifest.meanPixel,
  };
  const model = initModel(config, opts.seed);
  const drawRng = new Rng((opts.seed ^ 0x9e3779b9) >>> 0);
  const optimizer = tf.train.momentum(opts.learningRate, opts.momentum);
  const varList = Object.values(model.vars);

  const losses: number[] = [];
  const logLines: string[] = [];
  try {
    for (let iter = 0; iter < opts.iterations; iter++) {
      const indices = Array.from(
        { length: opts.batchSize }, () => drawRng.int(pool.length),
      );
      const batch = buildBatch(pool, indices, config);
      let dataLoss = 0;
      const cost = optimizer.minimize(() => {
        const probs = forward(model, batch.input, batch.categoryIdx);
        const data = batchMaskedWeightedLoss(probs, batch.targets, batch.weights);
        dataLoss = data.dataSync()[0];
        return tf.add(data, l2Penalty(model, opts.weightDecay)) as tf.Scalar;
      }, true, varList);
      const total = cost === null ? dataLoss : cost.dataSync()[0];
      cost?.dispose();
      batch.input.dispose();
      batch.targets.dispose();
      batch.weights.dispose();
      losses.push(dataLoss);
      logLines.push(JSON.stringify({ iter, loss: dataLoss, total }));
    }

    fs.mkdirSync(opts.outDir, { recursive: true });
    const lossLogPath = path.join(opts.outDir, 'loss_log.jsonl');
    fs.writeFileSync(lossLogPath, logLines.join('\n') + '\n');
    const checkpointPath = path.join(opts.outDir, 'checkpoint.json');
    saveCheckpoint(model, checkpointPath);
    return {
      checkpointPath,
      lossLogPath,
      losses,
      backend,
      poolSize: pool.length,
      rejected,
    };
  } finally {
    optimizer.dispose();
    disposeModel(model);
  }
}

/** Mean of a window at the start or end of the loss curve. */
export function windowMean(losses: number[], window: number, fromEnd: boolean): number {
  const w = Math.min(window, losses.length);
  const slice = fromEnd ? losses.slice(losses.length - w) : losses.slice(0, w);
  return slice.reduce((a, b) => a + b, 0) / w;
}
