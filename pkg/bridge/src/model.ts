/**
 * Toy multi-scale convolutional heatmap predictor.
 *
 * Three 3x3 conv stages with 2x max-pool between them; each stage's feature
 * map is projected to a common width, upsampled back to the input grid, and
 * the projections are summed before a per-pixel sigmoid head. An extra input
 * channel carries the centered modal-heatmap hypothesis, and a learned
 * per-category embedding is broadcast across the grid as additional input
 * channels.
 *
 * 3x3 convolutions are expressed as nine shifted slices concatenated
 * channel-wise and multiplied by a [9*Cin, Cout] matrix. That keeps the
 * whole gradient graph on kernels the wasm backend implements (the fused
 * conv filter gradient is not available there), at a small memory cost.
 */

import * as tf from '@tensorflow/tfjs';
import * as fs from 'fs';
import { Rng } from './rng';

export interface ModelConfig {
  netRes: number;
  embedDim: number;
  stageWidths: [number, number, number];
  projWidth: number;
  /** Known category names; embedding row 0 is reserved for anything else. */
  categories: string[];
  meanPixel: [number, number, number];
}

export const DEFAULTS = {
  netRes: 48,
  embedDim: 4,
  stageWidths: [12, 24, 24] as [number, number, number],
  projWidth: 16,
};

const CHECKPOINT_FORMAT = 'amodalforge-bridge-checkpoint';
const INPUT_CHANNELS = 4; // centered RGB + centered heat

export interface Model {
  config: ModelConfig;
  vars: Record<string, tf.Variable>;
}

/** Embedding row for a category name; unknown names share row 0. */
export function categoryIndex(config: ModelConfig, name: string): number {
  const idx = config.categories.indexOf(name);
  return idx < 0 ? 0 : idx + 1;
}

function heNormal(rng: Rng, shape: number[], fanIn: number): tf.Variable {
  const n = shape.reduce((a, b) => a * b, 1);
  const std = Math.sqrt(2.0 / fanIn);
  return tf.variable(tf.tensor(rng.normals(n, std), shape));
}

function zeros(shape: number[]): tf.Variable {
  return tf.variable(tf.zeros(shape));
}

/**
 * Fresh model with He-scaled conv/projection weights and zero biases.
 * The init draw order is fixed, so (config, seed) pins every weight.
 */
export function initModel(config: ModelConfig, seed: number): Model {
  const rng = new Rng(seed);
  const [f1, f2, f3] = config.stageWidths;
  const p = config.projWidth;
  const cin = INPUT_CHANNELS + config.embedDim;
  const rows = config.categories.length + 1;
  const vars: Record<string, tf.Variable> = {
    embed: tf.variable(tf.tensor(rng.normals(rows * config.embedDim, 0.5),
      [rows, config.embedDim])),
    conv1: heNormal(rng, [9 * cin, f1], 9 * cin),
    bias1: zeros([f1]),
    conv2: heNormal(rng, [9 * f1, f2], 9 * f1),
    bias2: zeros([f2]),
    conv3: heNormal(rng, [9 * f2, f3], 9 * f2),
    bias3: zeros([f3]),
    proj1: heNormal(rng, [f1, p], f1),
    proj2: heNormal(rng, [f2, p], f2),
    proj3: heNormal(rng, [f3, p], f3),
    projBias: zeros([p]),
    head: heNormal(rng, [p, 1], p),
    headBias: zeros([1]),
  };
  return { config, vars };
}

/** 3x3 same-padding conv as shifted slices + matMul; weight is [9*Cin, Cout]. */
function conv3x3(x: tf.Tensor4D, weight: tf.Variable, bias: tf.Variable): tf.Tensor4D {
  const [b, h, w, c] = x.shape;
  const padded = tf.pad(x, [[0, 0], [1, 1], [1, 1], [0, 0]]);
  const shifts: tf.Tensor4D[] = [];
  for (let dy = 0; dy < 3; dy++) {
    for (let dx = 0; dx < 3; dx++) {
      shifts.push(tf.slice(padded, [0, dy, dx, 0], [b, h, w, c]));
    }
  }
  const patches = tf.reshape(tf.concat(shifts, -1), [b * h * w, 9 * c]);
  const out = tf.add(tf.matMul(patches, weight as unknown as tf.Tensor2D), bias);
  return tf.reshape(out, [b, h, w, -1]);
}

/** 1x1 conv as a per-pixel matMul. */
function pointwise(x: tf.Tensor4D, weight: tf.Variable): tf.Tensor4D {
  const [b, h, w, c] = x.shape;
  const out = tf.matMul(tf.reshape(x, [b * h * w, c]), weight as unknown as tf.Tensor2D);
  return tf.reshape(out, [b, h, w, -1]);
}

/**
 * Forward pass: probabilities over the full-patch grid, shape [B, R, R, 1],
 * every value strictly inside (0, 1).
 *
 * input holds [B, R, R, 4] centered pixel+heat channels; categoryIdx holds
 * one embedding-row index per example.
 */
export function forward(
  model: Model, input: tf.Tensor4D, categoryIdx: number[],
): tf.Tensor4D {
  const v = model.vars;
  const r = model.config.netRes;
  const b = input.shape[0];
  const rows = model.config.categories.length + 1;
  const e = model.config.embedDim;

  // One-hot x embedding-table matMul gives a differentiable lookup without
  // needing a gather gradient on the wasm backend.
  const oneHotBuf = new Float32Array(b * rows);
  for (let i = 0; i < b; i++) oneHotBuf[i * rows + categoryIdx[i]] = 1;
  const oneHot = tf.tensor2d(oneHotBuf, [b, rows]);
  const emb = tf.matMul(oneHot, v.embed as unknown as tf.Tensor2D);
  const embMap = tf.add(tf.reshape(emb, [b, 1, 1, e]), tf.zeros([b, r, r, e]));

  const h0 = tf.concat([input, embMap], -1) as tf.Tensor4D;
  const s1 = tf.relu(conv3x3(h0, v.conv1, v.bias1)) as tf.Tensor4D;
  const d1 = tf.maxPool(s1, 2, 2, 'same');
  const s2 = tf.relu(conv3x3(d1, v.conv2, v.bias2)) as tf.Tensor4D;
  const d2 = tf.maxPool(s2, 2, 2, 'same');
  const s3 = tf.relu(conv3x3(d2, v.conv3, v.bias3)) as tf.Tensor4D;

  const p1 = pointwise(s1, v.proj1);
  const p2 = tf.image.resizeBilinear(pointwise(s2, v.proj2), [r, r]);
  const p3 = tf.image.resizeBilinear(pointwise(s3, v.proj3), [r, r]);
  const fused = tf.relu(tf.add(tf.add(tf.add(p1, p2), p3), v.projBias)) as tf.Tensor4D;

  const logits = tf.add(pointwise(fused, v.head), v.headBias);
  return tf.sigmoid(logits) as tf.Tensor4D;
}

/** Single-example forward; returns netRes^2 probabilities. */
export function forwardOne(model: Model, input: Float32Array, category: string): Float32Array {
  return tf.tidy(() => {
    const r = model.config.netRes;
    const x = tf.tensor4d(input, [1, r, r, INPUT_CHANNELS]);
    const probs = forward(model, x, [categoryIndex(model.config, category)]);
    return probs.dataSync() as Float32Array;
  });
}

export function disposeModel(model: Model): void {
  for (const v of Object.values(model.vars)) v.dispose();
}

function bufferToB64(values: Float32Array): string {
  const raw = Buffer.alloc(values.length * 4);
  for (let i = 0; i < values.length; i++) raw.writeFloatLE(values[i], i * 4);
  return raw.toString('base64');
}

function b64ToFloats(b64: string, name: string): Float32Array {
  const raw = Buffer.from(b64, 'base64');
  if (raw.length % 4 !== 0) throw new Error(`weight ${name}: payload is not float32`);
  const out = new Float32Array(raw.length / 4);
  for (let i = 0; i < out.length; i++) out[i] = raw.readFloatLE(i * 4);
  return out;
}

export function saveCheckpoint(model: Model, path: string): void {
  const weights: Record<string, { shape: number[]; data_b64: string }> = {};
  for (const [name, v] of Object.entries(model.vars)) {
    weights[name] = {
      shape: v.shape.slice(),
      data_b64: bufferToB64(v.dataSync() as Float32Array),
    };
  }
  const doc = { format: CHECKPOINT_FORMAT, version: 1, config: model.config, weights };
  fs.writeFileSync(path, JSON.stringify(doc));
}

export function loadCheckpoint(path: string): Model {
  const doc = JSON.parse(fs.readFileSync(path, 'utf-8'));
  if (doc.format !== CHECKPOINT_FORMAT || doc.version !== 1) {
    throw new Error(`${path}: not a recognized checkpoint`);
  }
  const config = doc.config as ModelConfig;
  const vars: Record<string, tf.Variable> = {};
  for (const [name, entry] of Object.entries(doc.weights as Record<string, { shape: number[]; data_b64: string }>)) {
    const values = b64ToFloats(entry.data_b64, name);
    const n = entry.shape.reduce((a: number, b: number) => a * b, 1);
    if (values.length !== n) {
      throw new Error(`${path}: weight ${name} holds ${values.length} values, shape needs ${n}`);
    }
    vars[name] = tf.variable(tf.tensor(values, entry.shape));
  }
  return { config, vars };
}
