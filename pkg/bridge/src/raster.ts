/**
 * Float raster resampling.
 *
 * Pixel-center convention: output sample i maps to source coordinate
 * (i + 0.5) * (srcLen / outLen) - 0.5, clamped to [0, srcLen - 1], so
 * resampling to the source size is exactly the identity. Crop variants take
 * an integer source window and never read outside it.
 */

export interface FloatRaster {
  width: number;
  height: number;
  channels: number;
  /** Row-major, channel-interleaved. */
  data: Float32Array;
}

export interface CropWindow {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

function axisPositions(outLen: number, srcLen: number): Float64Array {
  const scale = srcLen / outLen;
  const pos = new Float64Array(outLen);
  for (let i = 0; i < outLen; i++) {
    const p = (i + 0.5) * scale - 0.5;
    pos[i] = Math.min(Math.max(p, 0), srcLen - 1);
  }
  return pos;
}

/** Bilinear resample of a crop window to outW x outH. */
export function cropResizeBilinear(
  src: FloatRaster, win: CropWindow, outW: number, outH: number,
): FloatRaster {
  const cw = win.x1 - win.x0;
  const ch = win.y1 - win.y0;
  if (cw < 1 || ch < 1 || outW < 1 || outH < 1) {
    throw new Error(`degenerate resize: ${cw}x${ch} -> ${outW}x${outH}`);
  }
  const xs = axisPositions(outW, cw);
  const ys = axisPositions(outH, ch);
  const c = src.channels;
  const out = new Float32Array(outW * outH * c);
  for (let oy = 0; oy < outH; oy++) {
    const sy = ys[oy];
    const y0 = Math.floor(sy);
    const y1 = Math.min(y0 + 1, ch - 1);
    const ty = sy - y0;
    const rowA = (win.y0 + y0) * src.width;
    const rowB = (win.y0 + y1) * src.width;
    for (let ox = 0; ox < outW; ox++) {
      const sx = xs[ox];
      const x0 = Math.floor(sx);
      const x1 = Math.min(x0 + 1, cw - 1);
      const tx = sx - x0;
      const a = (rowA + win.x0 + x0) * c;
      const b = (rowA + win.x0 + x1) * c;
      const d = (rowB + win.x0 + x0) * c;
      const e = (rowB + win.x0 + x1) * c;
      const o = (oy * outW + ox) * c;
      for (let k = 0; k < c; k++) {
        const top = src.data[a + k] * (1 - tx) + src.data[b + k] * tx;
        const bot = src.data[d + k] * (1 - tx) + src.data[e + k] * tx;
        out[o + k] = top * (1 - ty) + bot * ty;
      }
    }
  }
  return { width: outW, height: outH, channels: c, data: out };
}

/** Nearest-neighbor resample of a full single-channel byte raster. */
export function resizeNearestBytes(
  src: Uint8Array, srcW: number, srcH: number, outW: number, outH: number,
): Uint8Array {
  if (outW < 1 || outH < 1) {
    throw new Error(`degenerate resize target ${outW}x${outH}`);
  }
  const scaleX = srcW / outW;
  const scaleY = srcH / outH;
  const out = new Uint8Array(outW * outH);
  for (let oy = 0; oy < outH; oy++) {
    const sy = Math.min(Math.max(Math.floor((oy + 0.5) * scaleY), 0), srcH - 1);
    for (let ox = 0; ox < outW; ox++) {
      const sx = Math.min(Math.max(Math.floor((ox + 0.5) * scaleX), 0), srcW - 1);
      out[oy * outW + ox] = src[sy * srcW + sx];
    }
  }
  return out;
}

/** Bilinear resample of a full single-channel float raster, clamped to [lo, hi]. */
export function resizeBilinearClamped(
  src: Float32Array, srcW: number, srcH: number, outW: number, outH: number,
  lo: number, hi: number,
): Float32Array {
  const raster: FloatRaster = { width: srcW, height: srcH, channels: 1, data: src };
  const res = cropResizeBilinear(raster, { x0: 0, y0: 0, x1: srcW, y1: srcH }, outW, outH);
  for (let i = 0; i < res.data.length; i++) {
    res.data[i] = Math.min(Math.max(res.data[i], lo), hi);
  }
  return res.data;
}

/** round-half-up to an integer, matching the dataset tooling's convention. */
export function roundHalfUp(x: number): number {
  return Math.floor(x + 0.5);
}
