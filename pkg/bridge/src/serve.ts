/**
 * Long-running protocol backend over stdin/stdout.
 *
 * Startup announces a hello frame (protocol 1, margin_frac 0.125); each
 * predict frame is answered with a heatmap frame echoing its id and
 * covering the requested footprint at the request's own resolution. A
 * shutdown frame ends the process with exit 0. Any malformed frame is
 * reported as an error frame and the process exits nonzero, since a corrupt
 * stream cannot be resynchronized. Requests are handled one at a time in
 * arrival order.
 *
 * The incoming patch is trimmed 10% per side and resampled to the net
 * resolution, mirroring the training-time input geometry; the net's output
 * is bilinearly upsampled back to the request resolution.
 */

import * as readline from 'readline';
import { BackendName, initBackend } from './backend';
import { Model, forwardOne, loadCheckpoint } from './model';
import { FloatRaster, cropResizeBilinear, resizeBilinearClamped, roundHalfUp } from './raster';
import { assembleInput } from './samples';
import { PredictFrame, WireError, decodeInbound, encodeError, encodeHeatmap, encodeHello } from './wire';

function writeLine(line: string): Promise<void> {
  return new Promise((resolve) => {
    if (process.stdout.write(line + '\n')) resolve();
    else process.stdout.once('drain', () => resolve());
  });
}

/** Run one predict frame through the net; returns request-resolution values. */
export function answerPredict(model: Model, frame: PredictFrame): Float32Array {
  const w = frame.width;
  const h = frame.height;
  const r = model.config.netRes;
  const tx = Math.min(roundHalfUp(0.1 * w), Math.floor((w - 1) / 2));
  const ty = Math.min(roundHalfUp(0.1 * h), Math.floor((h - 1) / 2));
  const win = { x0: tx, y0: ty, x1: w - tx, y1: h - ty };

  const rgbFull: FloatRaster = {
    width: w, height: h, channels: 3, data: new Float32Array(frame.patch.length),
  };
  for (let i = 0; i < frame.patch.length; i++) rgbFull.data[i] = frame.patch[i];
  const rgb = cropResizeBilinear(rgbFull, win, r, r);

  const heatFull: FloatRaster = {
    width: w, height: h, channels: 1, data: frame.heatmap,
  };
  const heat = cropResizeBilinear(heatFull, win, r, r).data;
  for (let i = 0; i < heat.length; i++) heat[i] = Math.min(Math.max(heat[i], 0), 1);

  const input = assembleInput(rgb, heat, model.config.meanPixel);
  const probs = forwardOne(model, input, frame.category);
  return resizeBilinearClamped(probs, r, r, w, h, 0, 1);
}

export async function serveMain(checkpointPath: string, backend: BackendName): Promise<void> {
  // Anything the tensor library might print must not land in the frame
  // stream; stdout carries frames only.
  console.log = console.error.bind(console);
  console.info = console.error.bind(console);

  await initBackend(backend);
  const model = loadCheckpoint(checkpointPath);
  await writeLine(encodeHello());

  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  let pending: Promise<void> = Promise.resolve();
  let done = false;

  const fail = async (message: string, code: number) => {
    done = true;
    rl.close();
    await writeLine(encodeError(message));
    process.exit(code);
  };

  rl.on('line', (line) => {
    pending = pending.then(async () => {
      if (done) return;
      const text = line.trim();
      if (!text) return;
      let frame;
      try {
        frame = decodeInbound(text);
      } catch (err) {
        if (err instanceof WireError) return fail(err.message, 2);
        throw err;
      }
      if (frame.type === 'shutdown') {
        done = true;
        rl.close();
        process.exit(0);
      }
      const values = answerPredict(model, frame);
      await writeLine(encodeHeatmap(frame.id, frame.width, frame.height, values));
    }).catch(async (err) => {
      if (!done) await fail(`internal failure: ${(err as Error).message}`, 2);
    });
  });

  rl.on('close', () => {
    pending.then(() => {
      // Stream ended without a shutdown frame: abnormal teardown.
      if (!done) process.exit(1);
    });
  });
}
