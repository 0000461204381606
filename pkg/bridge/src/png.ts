/**
 * PNG codecs for the raster formats the dataset tooling emits: 8-bit RGB
 * images and 8-bit single-channel label maps (binary masks use 0/1,
 * trilabel maps use {0, 1, 255}).
 */

import * as fs from 'fs';
import { PNG } from 'pngjs';

export interface RgbImage {
  width: number;
  height: number;
  /** Row-major RGB, 3 bytes per pixel. */
  data: Uint8Array;
}

export interface GrayImage {
  width: number;
  height: number;
  /** Row-major single channel, 1 byte per pixel. */
  data: Uint8Array;
}

export function readRgbPng(path: string): RgbImage {
  const png = PNG.sync.read(fs.readFileSync(path));
  const n = png.width * png.height;
  const data = new Uint8Array(n * 3);
  for (let i = 0; i < n; i++) {
    data[i * 3] = png.data[i * 4];
    data[i * 3 + 1] = png.data[i * 4 + 1];
    data[i * 3 + 2] = png.data[i * 4 + 2];
  }
  return { width: png.width, height: png.height, data };
}

export function readGrayPng(path: string): GrayImage {
  const png = PNG.sync.read(fs.readFileSync(path));
  const n = png.width * png.height;
  const data = new Uint8Array(n);
  for (let i = 0; i < n; i++) {
    // Sources are written as true grayscale, so the channels agree; the red
    // channel is the value either way.
    data[i] = png.data[i * 4];
  }
  return { width: png.width, height: png.height, data };
}

export function writeRgbPng(path: string, img: RgbImage): void {
  const png = new PNG({ width: img.width, height: img.height });
  const n = img.width * img.height;
  for (let i = 0; i < n; i++) {
    png.data[i * 4] = img.data[i * 3];
    png.data[i * 4 + 1] = img.data[i * 3 + 1];
    png.data[i * 4 + 2] = img.data[i * 3 + 2];
    png.data[i * 4 + 3] = 255;
  }
  fs.writeFileSync(path, PNG.sync.write(png, { colorType: 2 }));
}

export function writeGrayPng(path: string, img: GrayImage): void {
  const png = new PNG({ width: img.width, height: img.height });
  const n = img.width * img.height;
  for (let i = 0; i < n; i++) {
    const v = img.data[i];
    png.data[i * 4] = v;
    png.data[i * 4 + 1] = v;
    png.data[i * 4 + 2] = v;
    png.data[i * 4 + 3] = 255;
  }
  fs.writeFileSync(path, PNG.sync.write(png, { colorType: 0 }));
}
