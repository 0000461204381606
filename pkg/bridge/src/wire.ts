/**
 * Newline-delimited JSON wire protocol, backend side.
 *
 * One frame per line. The parent process writes `predict` frames to our
 * stdin and reads `heatmap` frames from our stdout; we announce ourselves
 * with a `hello` frame on startup and exit after a `shutdown` frame. Pixel
 * payloads travel as base64: raw RGB bytes for patches, little-endian
 * float32 for heatmaps, both row-major.
 *
 * Decoding is strict: unknown keys, missing keys, wrong types, or payload
 * lengths that disagree with the declared dimensions all raise WireError.
 * Encoding uses a fixed key order and compact separators so emitted lines
 * are canonical.
 */

export const PROTOCOL_VERSION = 1;
export const MARGIN_FRAC = 0.125;

export class WireError extends Error {}

export interface PredictFrame {
  type: 'predict';
  id: number;
  category: string;
  width: number;
  height: number;
  /** Row-major RGB bytes, h*w*3. */
  patch: Uint8Array;
  /** Row-major float32 in [0, 1], h*w. */
  heatmap: Float32Array;
}

export interface ShutdownFrame {
  type: 'shutdown';
}

export type InboundFrame = PredictFrame | ShutdownFrame;

const B64_RE = /^[A-Za-z0-9+/]*={0,2}$/;

function decodeB64(value: unknown, name: string, expectedLen: number): Buffer {
  if (typeof value !== 'string') {
    throw new WireError(`${name} must be a base64 string`);
  }
  if (value.length % 4 !== 0 || !B64_RE.test(value)) {
    throw new WireError(`${name} is not valid base64`);
  }
  const raw = Buffer.from(value, 'base64');
  if (raw.length !== expectedLen) {
    throw new WireError(`${name} holds ${raw.length} bytes, expected ${expectedLen}`);
  }
  return raw;
}

function exactKeys(obj: Record<string, unknown>, keys: string[]): void {
  const got = Object.keys(obj).sort();
  const expected = [...keys].sort();
  if (got.length !== expected.length || got.some((k, i) => k !== expected[i])) {
    const extra = got.filter((k) => !expected.includes(k));
    const missing = expected.filter((k) => !got.includes(k));
    throw new WireError(`bad frame keys (extra=${JSON.stringify(extra)}, missing=${JSON.stringify(missing)})`);
  }
}

function asInt(value: unknown, name: string): number {
  if (typeof value !== 'number' || !Number.isInteger(value)) {
    throw new WireError(`${name} must be an integer, got ${JSON.stringify(value)}`);
  }
  return value;
}

function asDim(value: unknown, name: string): number {
  const n = asInt(value, name);
  if (n < 1) throw new WireError(`${name} must be positive, got ${n}`);
  return n;
}

/** Parse one inbound wire line; raises WireError on any deviation. */
export function decodeInbound(line: string): InboundFrame {
  let obj: unknown;
  try {
    obj = JSON.parse(line);
  } catch (err) {
    throw new WireError(`frame is not valid JSON: ${(err as Error).message}`);
  }
  if (typeof obj !== 'object' || obj === null || Array.isArray(obj)) {
    throw new WireError('frame must be a JSON object');
  }
  const rec = obj as Record<string, unknown>;
  const kind = rec['type'];
  if (kind === 'shutdown') {
    exactKeys(rec, ['type']);
    return { type: 'shutdown' };
  }
  if (kind === 'predict') {
    exactKeys(rec, ['type', 'id', 'category', 'width', 'height', 'patch_b64', 'heatmap_b64']);
    const id = asInt(rec['id'], 'id');
    if (id < 0) throw new WireError(`id must be a non-negative integer, got ${id}`);
    const category = rec['category'];
    if (typeof category !== 'string' || category.length === 0) {
      throw new WireError('category must be a non-empty string');
    }
    const width = asDim(rec['width'], 'width');
    const height = asDim(rec['height'], 'height');
    const patchRaw = decodeB64(rec['patch_b64'], 'patch_b64', height * width * 3);
    const heatRaw = decodeB64(rec['heatmap_b64'], 'heatmap_b64', height * width * 4);
    const heatmap = new Float32Array(height * width);
    const view = new DataView(heatRaw.buffer, heatRaw.byteOffset, heatRaw.byteLength);
    for (let i = 0; i < heatmap.length; i++) {
      const v = view.getFloat32(i * 4, true);
      if (!Number.isFinite(v)) throw new WireError('heatmap values must be finite');
      if (v < 0 || v > 1) throw new WireError('heatmap values must lie in [0, 1]');
      heatmap[i] = v;
    }
    return {
      type: 'predict',
      id,
      category,
      width,
      height,
      patch: new Uint8Array(patchRaw),
      heatmap,
    };
  }
  throw new WireError(`unexpected frame type ${JSON.stringify(kind)}`);
}

export function encodeHello(marginFrac: number = MARGIN_FRAC): string {
  return JSON.stringify({ type: 'hello', protocol: PROTOCOL_VERSION, margin_frac: marginFrac });
}

export function encodeHeatmap(id: number, width: number, height: number, values: Float32Array): string {
  if (values.length !== width * height) {
    throw new WireError(`heatmap payload has ${values.length} values, expected ${width * height}`);
  }
  const raw = Buffer.alloc(values.length * 4);
  for (let i = 0; i < values.length; i++) {
    raw.writeFloatLE(values[i], i * 4);
  }
  return JSON.stringify({
    type: 'heatmap',
    id,
    width,
    height,
    values_b64: raw.toString('base64'),
  });
}

/** Error report for a corrupted conversation; the peer treats it as fatal. */
export function encodeError(message: string): string {
  return JSON.stringify({ type: 'error', message });
}
