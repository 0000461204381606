import * as fs from 'fs';
import { describe, expect, it } from 'vitest';
import { GrayImage, RgbImage } from '../src/png';
import {
  FULL_RES, LoadedSample, NEGATIVE, POSITIVE, UNKNOWN,
  centeredHeatValue, listSampleDirs, loadManifestInfo, loadSample, prepareExample,
} from '../src/samples';
import { MANIFEST_PATH, TRAIN_DIR } from './paths';

const NET_RES = 48;

function flat(width: number, height: number, value: number): GrayImage {
  return { width, height, data: new Uint8Array(width * height).fill(value) };
}

function gradient(width: number, height: number): RgbImage {
  const data = new Uint8Array(width * height * 3);
  for (let i = 0; i < width * height; i++) {
    data[i * 3] = i % 251;
    data[i * 3 + 1] = (i * 3) % 251;
    data[i * 3 + 2] = (i * 7) % 251;
  }
  return { width, height, data };
}

/** In-memory sample with a given visible-pixel count inside the full frame. */
function syntheticSample(width: number, height: number, visibleCount: number): LoadedSample {
  const visible = flat(width, height, 0);
  // Fill from the exact center outward so trimming never removes the
  // visible pixels while the count stays small.
  const order = new Set<number>();
  const cx = Math.floor(width / 2);
  const cy = Math.floor(height / 2);
  for (let radius = 0; radius < Math.max(width, height) && order.size < visibleCount; radius++) {
    for (let y = cy - radius; y <= cy + radius && order.size < visibleCount; y++) {
      for (let x = cx - radius; x <= cx + radius && order.size < visibleCount; x++) {
        if (x < 0 || y < 0 || x >= width || y >= height) continue;
        order.add(y * width + x);
      }
    }
  }
  for (const idx of order) visible.data[idx] = 1;
  const target = flat(width, height, NEGATIVE);
  for (const idx of order) target.data[idx] = POSITIVE;
  return {
    dir: '<memory>',
    patch: gradient(width, height),
    target,
    visible,
    meta: {
      seed: 0, image_id: 'img', instance_index: 0, category: 'slab',
      patch_box: [0, 0, width, height], visible_box: [0, 0, 1, 1],
      jittered_modal_box: [0, 0, 1, 1], visible_fraction: 1, n_overlays: 0,
    },
  };
}

describe('sample loading', () => {
  it('reads synthesized sample directories with consistent rasters', () => {
    const dirs = listSampleDirs(TRAIN_DIR);
    expect(dirs.length).toBe(64);
    const sample = loadSample(dirs[0]);
    expect(sample.patch.width).toBe(sample.meta.patch_box[2] - sample.meta.patch_box[0]);
    expect(sample.patch.height).toBe(sample.meta.patch_box[3] - sample.meta.patch_box[1]);
    const labels = new Set(sample.target.data);
    for (const v of labels) expect([NEGATIVE, POSITIVE, UNKNOWN]).toContain(v);
  });

  it('reads the manifest vocabulary and mean pixel', () => {
    const info = loadManifestInfo(MANIFEST_PATH);
    expect(info.categories).toEqual(['slab', 'disc', 'wedge']);
    for (const c of info.meanPixel) {
      expect(c).toBeGreaterThan(0);
      expect(c).toBeLessThan(255);
    }
  });

  it('rejects manifests with malformed fields', () => {
    const tmp = `${TRAIN_DIR}-bad-manifest.json`;
    fs.writeFileSync(tmp, JSON.stringify({ mean_pixel: [1, 2], categories: ['a'], images: [] }));
    expect(() => loadManifestInfo(tmp)).toThrow(/mean_pixel/);
    fs.writeFileSync(tmp, JSON.stringify({ mean_pixel: [1, 2, 3], categories: [], images: [] }));
    expect(() => loadManifestInfo(tmp)).toThrow(/categories/);
    fs.rmSync(tmp);
  });
});

describe('input preparation', () => {
  const mean: [number, number, number] = [64, 64, 64];

  it('rejects samples whose visible pixels fall under 10% of the trimmed window', () => {
    // 50x40 patch trims 5 and 4 per side: 40x32 window, 1280 pixels.
    const below = syntheticSample(50, 40, 127); // 127/1280 = 9.92%
    const above = syntheticSample(50, 40, 129); // 129/1280 = 10.08%
    expect(prepareExample(below, NET_RES, mean)).toBeNull();
    expect(prepareExample(above, NET_RES, mean)).not.toBeNull();
  });

  it('weights by the upsampling factor from the trimmed window', () => {
    const small = prepareExample(syntheticSample(50, 40, 400), NET_RES, mean);
    // 40x32 window: geomean sqrt(1280) ~ 35.78, upsampling 224/35.78.
    expect(small!.lossWeight).toBeCloseTo(Math.sqrt(40 * 32) / FULL_RES, 10);
    const big = prepareExample(syntheticSample(300, 300, 9000), NET_RES, mean);
    // 240x240 window is larger than 224: no upsampling, weight 1.
    expect(big!.lossWeight).toBe(1.0);
  });

  it('fills the heat channel with the centered constant hypothesis', () => {
    expect(centeredHeatValue(0.5)).toBe(1); // round-half-up of 127.5, minus 127
    expect(centeredHeatValue(0)).toBe(-127);
    expect(centeredHeatValue(1)).toBe(128);
    const ex = prepareExample(syntheticSample(50, 40, 400), NET_RES, mean)!;
    for (let i = 0; i < NET_RES * NET_RES; i++) {
      expect(ex.input[i * 4 + 3]).toBeCloseTo(1 / 128, 6);
    }
  });

  it('centers pixels on the mean and scales to order one', () => {
    const sample = syntheticSample(50, 40, 400);
    const ex = prepareExample(sample, NET_RES, mean)!;
    for (let i = 0; i < NET_RES * NET_RES; i++) {
      for (let k = 0; k < 3; k++) {
        const v = ex.input[i * 4 + k];
        expect(v).toBeGreaterThanOrEqual((0 - 255) / 128);
        expect(v).toBeLessThanOrEqual(255 / 128);
      }
    }
  });

  it('keeps the target aligned to the untrimmed patch at net resolution', () => {
    const ex = prepareExample(syntheticSample(50, 40, 400), NET_RES, mean)!;
    expect(ex.targetLabels.length).toBe(NET_RES * NET_RES);
    const values = new Set(ex.targetLabels);
    for (const v of values) expect([NEGATIVE, POSITIVE, UNKNOWN]).toContain(v);
    // The synthetic object sits at the center, so the center label must be
    // positive and the corners negative (corners survive only in the
    // untrimmed frame).
    const mid = Math.floor(NET_RES / 2) * NET_RES + Math.floor(NET_RES / 2);
    expect(ex.targetLabels[mid]).toBe(POSITIVE);
    expect(ex.targetLabels[0]).toBe(NEGATIVE);
  });

  it('prepares every synthesized training sample or rejects it cleanly', () => {
    const info = loadManifestInfo(MANIFEST_PATH);
    let accepted = 0;
    for (const dir of listSampleDirs(TRAIN_DIR)) {
      const ex = prepareExample(loadSample(dir), NET_RES, info.meanPixel);
      if (ex === null) continue;
      accepted += 1;
      expect(ex.input.length).toBe(NET_RES * NET_RES * 4);
      expect(ex.lossWeight).toBeGreaterThan(0);
      expect(ex.lossWeight).toBeLessThanOrEqual(1);
      expect(info.categories).toContain(ex.category);
    }
    expect(accepted).toBeGreaterThan(32);
  });
});
