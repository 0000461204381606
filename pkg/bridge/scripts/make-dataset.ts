/**
 * Deterministic synthetic manifest builder for the test suite.
 *
 * Writes a handful of gradient-plus-noise images, each carrying 2-4 layered
 * shapes (rectangles, ellipses, right triangles) with modal masks computed
 * under painter's order, plus the manifest.json that points at them. The
 * layout mirrors the scale the synthesis pipeline expects: images around
 * 150-190 x 110-140 with shapes of 26-56 x 22-48 pixels.
 */

import * as fs from 'fs';
import * as path from 'path';
import { parseArgs } from 'node:util';
import { writeGrayPng, writeRgbPng } from '../src/png';
import { Rng } from '../src/rng';

const CATEGORIES = ['slab', 'disc', 'wedge'];

interface Placed {
  kind: number;
  shape: Uint8Array;
  modal: Uint8Array;
}

function drawShape(rng: Rng, w: number, h: number): { kind: number; shape: Uint8Array } {
  const kind = rng.int(3);
  const sw = 26 + rng.int(30);
  const sh = 22 + rng.int(26);
  const x0 = 2 + rng.int(w - sw - 4);
  const y0 = 2 + rng.int(h - sh - 4);
  const shape = new Uint8Array(w * h);
  if (kind === 0) {
    for (let y = y0; y < y0 + sh; y++) {
      shape.fill(1, y * w + x0, y * w + x0 + sw);
    }
  } else if (kind === 1) {
    const cx = x0 + sw / 2;
    const cy = y0 + sh / 2;
    for (let y = 0; y < h; y++) {
      for (let x = 0; x < w; x++) {
        const dx = (x - cx) / (sw / 2);
        const dy = (y - cy) / (sh / 2);
        if (dx * dx + dy * dy <= 1.0) shape[y * w + x] = 1;
      }
    }
  } else {
    for (let yy = 0; yy < sh; yy++) {
      for (let xx = 0; xx < sw; xx++) {
        if (xx * sh <= yy * sw) shape[(y0 + yy) * w + (x0 + xx)] = 1;
      }
    }
  }
  return { kind, shape };
}

function layoutImage(rng: Rng, w: number, h: number): Placed[] {
  for (let attempt = 0; attempt < 200; attempt++) {
    const nInst = 2 + rng.int(3);
    const shapes = Array.from({ length: nInst }, () => drawShape(rng, w, h));
    const placed: Placed[] = [];
    let ok = true;
    for (let j = 0; j < shapes.length; j++) {
      const later = new Uint8Array(w * h);
      for (let k = j + 1; k < shapes.length; k++) {
        for (let i = 0; i < later.length; i++) later[i] |= shapes[k].shape[i];
      }
      const modal = new Uint8Array(w * h);
      let count = 0;
      for (let i = 0; i < modal.length; i++) {
        modal[i] = shapes[j].shape[i] & (1 - later[i]);
        count += modal[i];
      }
      if (count < 60) {
        ok = false;
        break;
      }
      placed.push({ kind: shapes[j].kind, shape: shapes[j].shape, modal });
    }
    if (ok) return placed;
  }
  throw new Error('could not lay out a synthetic image');
}

export interface DatasetOptions {
  nImages?: number;
  seed?: number;
}

/** Build the manifest tree under root; returns the manifest.json path. */
export function buildDataset(root: string, options: DatasetOptions = {}): string {
  const nImages = options.nImages ?? 6;
  const seed = options.seed ?? 23;
  const rng = new Rng(seed);
  fs.mkdirSync(path.join(root, 'images'), { recursive: true });
  fs.mkdirSync(path.join(root, 'masks'), { recursive: true });

  const entries = [];
  let totalR = 0;
  let totalG = 0;
  let totalB = 0;
  let totalCount = 0;
  for (let i = 0; i < nImages; i++) {
    const w = 150 + rng.int(40);
    const h = 110 + rng.int(30);
    const placed = layoutImage(rng, w, h);

    const pixels = new Uint8Array(w * h * 3);
    for (let y = 0; y < h; y++) {
      const base = 30 + (60 * y) / (h - 1);
      for (let x = 0; x < w; x++) {
        const o = (y * w + x) * 3;
        pixels[o] = base;
        pixels[o + 1] = base;
        pixels[o + 2] = base;
      }
    }
    for (const inst of placed) {
      const color = [60 + rng.int(161), 60 + rng.int(161), 60 + rng.int(161)];
      for (let p = 0; p < w * h; p++) {
        if (inst.shape[p]) {
          pixels[p * 3] = color[0];
          pixels[p * 3 + 1] = color[1];
          pixels[p * 3 + 2] = color[2];
        }
      }
    }
    for (let p = 0; p < pixels.length; p++) {
      const noisy = Math.floor(pixels[p] + rng.normal() * 4.0 + 0.5);
      pixels[p] = Math.min(Math.max(noisy, 0), 255);
    }

    const imageId = `img_${String(i).padStart(2, '0')}`;
    writeRgbPng(path.join(root, 'images', `${imageId}.png`), { width: w, height: h, data: pixels });
    for (let p = 0; p < w * h; p++) {
      totalR += pixels[p * 3];
      totalG += pixels[p * 3 + 1];
      totalB += pixels[p * 3 + 2];
    }
    totalCount += w * h;

    const instances = [];
    for (let j = 0; j < placed.length; j++) {
      const inst = placed[j];
      const maskPath = `masks/${imageId}_${j}.png`;
      writeGrayPng(path.join(root, maskPath), { width: w, height: h, data: inst.modal });
      let modalCount = 0;
      let shapeCount = 0;
      for (let p = 0; p < w * h; p++) {
        modalCount += inst.modal[p];
        shapeCount += inst.shape[p];
      }
      instances.push({
        category: CATEGORIES[inst.kind],
        mask_path: maskPath,
        occluded: modalCount < shapeCount,
      });
    }
    entries.push({ id: imageId, path: `images/${imageId}.png`, instances });
  }

  const round4 = (v: number) => Math.round(v * 10000) / 10000;
  const manifest = {
    mean_pixel: [
      round4(totalR / totalCount), round4(totalG / totalCount), round4(totalB / totalCount),
    ],
    categories: CATEGORIES,
    images: entries,
  };
  const manifestPath = path.join(root, 'manifest.json');
  fs.writeFileSync(manifestPath, JSON.stringify(manifest, null, 2) + '\n');
  return manifestPath;
}

if (require.main === module) {
  const { values } = parseArgs({
    args: process.argv.slice(2),
    options: {
      'out': { type: 'string' },
      'images': { type: 'string' },
      'seed': { type: 'string' },
    },
  });
  if (!values['out']) {
    console.error('usage: make-dataset --out DIR [--images N] [--seed N]');
    process.exit(1);
  }
  const manifestPath = buildDataset(values['out'], {
    nImages: values['images'] ? Number(values['images']) : undefined,
    seed: values['seed'] ? Number(values['seed']) : undefined,
  });
  console.log(manifestPath);
}
