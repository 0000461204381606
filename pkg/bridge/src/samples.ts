/**
 * Reads synthesized sample directories and shapes them into net inputs.
 *
 * A sample directory holds patch.png (RGB, native patch resolution),
 * target.png ({0,1,255} labels over the patch), visible.png (0/1 visible
 * mask), truth.png (0/1 full-extent mask) and meta.json. The companion
 * manifest.json provides mean_pixel and the category vocabulary.
 *
 * Input preparation follows the training recipe: trim 10% of the patch from
 * each side and rescale the remainder to the net resolution; reject the
 * sample when visible-object pixels cover less than 10% of the trimmed
 * window. The target stays aligned to the full, untrimmed patch, so the net
 * learns to predict slightly beyond its input view. The per-sample loss
 * weight is 1 / max(1, 224 / geomean(trimmed window dims)), damping samples
 * that were upsampled far beyond their native detail.
 */

import * as fs from 'fs';
import * as path from 'path';
import { GrayImage, RgbImage, readGrayPng, readRgbPng } from './png';
import { FloatRaster, cropResizeBilinear, resizeNearestBytes, roundHalfUp } from './raster';

/** Wire-side patch resolution; also the reference scale for loss weights. */
export const FULL_RES = 224;

export const NEGATIVE = 0;
export const POSITIVE = 1;
export const UNKNOWN = 255;

export type ModalSource = 'constant' | 'visible';

export interface SampleMeta {
  seed: number;
  image_id: string;
  instance_index: number;
  category: string;
  patch_box: [number, number, number, number];
  visible_box: [number, number, number, number];
  jittered_modal_box: [number, number, number, number];
  visible_fraction: number;
  n_overlays: number;
}

export interface LoadedSample {
  dir: string;
  patch: RgbImage;
  target: GrayImage;
  visible: GrayImage;
  meta: SampleMeta;
}

export interface ManifestInfo {
  meanPixel: [number, number, number];
  categories: string[];
}

export interface PreparedExample {
  /** netRes*netRes*4 floats, channel-interleaved: centered RGB then heat. */
  input: Float32Array;
  /** netRes*netRes labels in {0, 1, 255}, aligned to the full patch. */
  targetLabels: Uint8Array;
  lossWeight: number;
  category: string;
}

export function loadManifestInfo(manifestPath: string): ManifestInfo {
  const doc = JSON.parse(fs.readFileSync(manifestPath, 'utf-8'));
  const mean = doc.mean_pixel;
  if (!Array.isArray(mean) || mean.length !== 3 || mean.some((v) => typeof v !== 'number')) {
    throw new Error(`${manifestPath}: mean_pixel must be three numbers`);
  }
  const categories = doc.categories;
  if (!Array.isArray(categories) || categories.length === 0
      || categories.some((c) => typeof c !== 'string' || c.length === 0)) {
    throw new Error(`${manifestPath}: categories must be non-empty strings`);
  }
  return { meanPixel: [mean[0], mean[1], mean[2]], categories };
}

/** Sample subdirectories of a synthesis output tree, sorted by name. */
export function listSampleDirs(dataDir: string): string[] {
  return fs.readdirSync(dataDir, { withFileTypes: true })
    .filter((e) => e.isDirectory() && fs.existsSync(path.join(dataDir, e.name, 'meta.json')))
    .map((e) => path.join(dataDir, e.name))
    .sort();
}

export function loadSample(dir: string): LoadedSample {
  const meta = JSON.parse(fs.readFileSync(path.join(dir, 'meta.json'), 'utf-8')) as SampleMeta;
  const patch = readRgbPng(path.join(dir, 'patch.png'));
  const target = readGrayPng(path.join(dir, 'target.png'));
  const visible = readGrayPng(path.join(dir, 'visible.png'));
  if (target.width !== patch.width || target.height !== patch.height
      || visible.width !== patch.width || visible.height !== patch.height) {
    throw new Error(`${dir}: raster dimensions disagree`);
  }
  for (const v of target.data) {
    if (v !== NEGATIVE && v !== POSITIVE && v !== UNKNOWN) {
      throw new Error(`${dir}: target.png holds label ${v}`);
    }
  }
  for (const v of visible.data) {
    if (v !== 0 && v !== 1) throw new Error(`${dir}: visible.png is not 0/1`);
  }
  return { dir, patch, target, visible, meta };
}

function trimMargins(w: number, h: number): { tx: number; ty: number } {
  // Never trim a dimension away entirely; tiny patches keep >= 1 pixel.
  const tx = Math.min(roundHalfUp(0.1 * w), Math.floor((w - 1) / 2));
  const ty = Math.min(roundHalfUp(0.1 * h), Math.floor((h - 1) / 2));
  return { tx, ty };
}

function rgbRaster(img: RgbImage): FloatRaster {
  const data = new Float32Array(img.data.length);
  for (let i = 0; i < img.data.length; i++) data[i] = img.data[i];
  return { width: img.width, height: img.height, channels: 3, data };
}

function grayRaster(img: GrayImage): FloatRaster {
  const data = new Float32Array(img.data.length);
  for (let i = 0; i < img.data.length; i++) data[i] = img.data[i];
  return { width: img.width, height: img.height, channels: 1, data };
}

/** Affine map from heat in [0, 1] to the centered channel in [-127, 128]. */
export function centeredHeatValue(h: number): number {
  return Math.floor(255.0 * h + 0.5) - 127;
}

/**
 * Assemble the net input stack from already-resampled rasters.
 *
 * rgb is a netRes x netRes x 3 raster of raw byte values; heat is netRes^2
 * floats in [0, 1] or null for the constant-0.5 hypothesis. Pixels are
 * centered on meanPixel, and both pixel and heat channels are scaled by
 * 1/128 so the net sees O(1) activations.
 */
export function assembleInput(
  rgb: FloatRaster, heat: Float32Array | null, meanPixel: [number, number, number],
): Float32Array {
  const n = rgb.width * rgb.height;
  const input = new Float32Array(n * 4);
  const constHeat = centeredHeatValue(0.5) / 128.0;
  for (let i = 0; i < n; i++) {
    input[i * 4] = (rgb.data[i * 3] - meanPixel[0]) / 128.0;
    input[i * 4 + 1] = (rgb.data[i * 3 + 1] - meanPixel[1]) / 128.0;
    input[i * 4 + 2] = (rgb.data[i * 3 + 2] - meanPixel[2]) / 128.0;
    input[i * 4 + 3] = heat === null ? constHeat : centeredHeatValue(heat[i]) / 128.0;
  }
  return input;
}

/**
 * Shape one sample into net input/target rasters, or null when rejected
 * (visible pixels under 10% of the trimmed window). Rejected samples are
 * simply excluded from the training pool; the caller draws another.
 */
export function prepareExample(
  sample: LoadedSample,
  netRes: number,
  meanPixel: [number, number, number],
  modalSource: ModalSource = 'constant',
): PreparedExample | null {
  const pw = sample.patch.width;
  const ph = sample.patch.height;
  const { tx, ty } = trimMargins(pw, ph);
  const win = { x0: tx, y0: ty, x1: pw - tx, y1: ph - ty };
  const winArea = (win.x1 - win.x0) * (win.y1 - win.y0);

  let visibleInWin = 0;
  for (let y = win.y0; y < win.y1; y++) {
    for (let x = win.x0; x < win.x1; x++) {
      visibleInWin += sample.visible.data[y * pw + x];
    }
  }
  if (visibleInWin / winArea < 0.10) return null;

  const rgb = cropResizeBilinear(rgbRaster(sample.patch), win, netRes, netRes);
  let heat: Float32Array | null = null;
  if (modalSource === 'visible') {
    heat = cropResizeBilinear(grayRaster(sample.visible), win, netRes, netRes).data;
    for (let i = 0; i < heat.length; i++) {
      heat[i] = Math.min(Math.max(heat[i], 0), 1);
    }
  }
  const input = assembleInput(rgb, heat, meanPixel);
  const targetLabels = resizeNearestBytes(sample.target.data, pw, ph, netRes, netRes);
  const upsampling = Math.max(1.0, FULL_RES / Math.sqrt(winArea));
  return {
    input,
    targetLabels,
    lossWeight: 1.0 / upsampling,
    category: sample.meta.category,
  };
}
