/**
 * Tensor backend selection. The wasm backend carries training; the pure-JS
 * cpu backend is the fallback and the choice for small unit work. Threads
 * are pinned to 1 so reduction order, and therefore every loss log, is
 * reproducible.
 */

import * as tf from '@tensorflow/tfjs';
import * as path from 'path';

export type BackendName = 'wasm' | 'cpu';

let active: string | null = null;

export async function initBackend(preferred: BackendName = 'wasm'): Promise<string> {
  if (active !== null) return active;
  if (preferred === 'wasm') {
    try {
      // eslint-disable-next-line @typescript-eslint/no-var-requires
      const wasm = require('@tensorflow/tfjs-backend-wasm');
      const dist = path.join(
        path.dirname(require.resolve('@tensorflow/tfjs-backend-wasm/package.json')),
        'dist',
      ) + path.sep;
      wasm.setWasmPaths(dist);
      wasm.setThreadsCount(1);
      if (await tf.setBackend('wasm')) {
        await tf.ready();
        active = 'wasm';
        return active;
      }
    } catch {
      // fall through to cpu
    }
  }
  await tf.setBackend('cpu');
  await tf.ready();
  active = 'cpu';
  return active;
}
