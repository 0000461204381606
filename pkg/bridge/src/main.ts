/**
 * Command-line entry: `train` fits a checkpoint from a synthesis output
 * tree; `serve` answers wire-protocol predict frames from a checkpoint.
 * Usage problems exit 1, runtime failures exit 2.
 */

import { parseArgs } from 'node:util';
import { BackendName } from './backend';
import { serveMain } from './serve';
import { trainModel, windowMean } from './train';
import { ModalSource } from './samples';

class UsageError extends Error {}

const USAGE = `usage:
  amodalforge-bridge train --data DIR --manifest FILE --out DIR
      [--iterations N] [--batch-size N] [--learning-rate F] [--weight-decay F]
      [--momentum F] [--seed N] [--net-res N] [--modal-source constant|visible]
      [--backend wasm|cpu]
  amodalforge-bridge serve --checkpoint FILE [--backend wasm|cpu]`;

function requireString(values: Record<string, unknown>, name: string): string {
  const v = values[name];
  if (typeof v !== 'string' || v.length === 0) {
    throw new UsageError(`--${name} is required`);
  }
  return v;
}

function optionalNumber(values: Record<string, unknown>, name: string): number | undefined {
  const v = values[name];
  if (v === undefined) return undefined;
  const n = Number(v);
  if (!Number.isFinite(n)) throw new UsageError(`--${name} must be a number, got ${v}`);
  return n;
}

function optionalInt(values: Record<string, unknown>, name: string): number | undefined {
  const n = optionalNumber(values, name);
  if (n !== undefined && !Number.isInteger(n)) {
    throw new UsageError(`--${name} must be an integer, got ${values[name]}`);
  }
  return n;
}

function backendChoice(values: Record<string, unknown>): BackendName | undefined {
  const v = values['backend'];
  if (v === undefined) return undefined;
  if (v !== 'wasm' && v !== 'cpu') throw new UsageError(`--backend must be wasm or cpu, got ${v}`);
  return v;
}

async function runTrain(argv: string[]): Promise<void> {
  const { values } = parseArgs({
    args: argv,
    options: {
      'data': { type: 'string' },
      'manifest': { type: 'string' },
      'out': { type: 'string' },
      'iterations': { type: 'string' },
      'batch-size': { type: 'string' },
      'learning-rate': { type: 'string' },
      'weight-decay': { type: 'string' },
      'momentum': { type: 'string' },
      'seed': { type: 'string' },
      'net-res': { type: 'string' },
      'modal-source': { type: 'string' },
      'backend': { type: 'string' },
    },
  });
  const modalSource = values['modal-source'];
  if (modalSource !== undefined && modalSource !== 'constant' && modalSource !== 'visible') {
    throw new UsageError(`--modal-source must be constant or visible, got ${modalSource}`);
  }
  const result = await trainModel({
    dataDir: requireString(values, 'data'),
    manifestPath: requireString(values, 'manifest'),
    outDir: requireString(values, 'out'),
    iterations: optionalInt(values, 'iterations'),
    batchSize: optionalInt(values, 'batch-size'),
    learningRate: optionalNumber(values, 'learning-rate'),
    weightDecay: optionalNumber(values, 'weight-decay'),
    momentum: optionalNumber(values, 'momentum'),
    seed: optionalInt(values, 'seed'),
    netRes: optionalInt(values, 'net-res'),
    modalSource: modalSource as ModalSource | undefined,
    backend: backendChoice(values),
  });
  const head = windowMean(result.losses, 20, false);
  const tail = windowMean(result.losses, 20, true);
  console.log(`backend=${result.backend} pool=${result.poolSize} rejected=${result.rejected}`);
  console.log(`loss first/last window: ${head.toFixed(4)} -> ${tail.toFixed(4)}`);
  console.log(`checkpoint: ${result.checkpointPath}`);
}

async function runServe(argv: string[]): Promise<void> {
  const { values } = parseArgs({
    args: argv,
    options: {
      'checkpoint': { type: 'string' },
      'backend': { type: 'string' },
    },
  });
  await serveMain(requireString(values, 'checkpoint'), backendChoice(values) ?? 'wasm');
}

export async function main(argv: string[]): Promise<number> {
  try {
    const [command, ...rest] = argv;
    if (command === 'train') {
      await runTrain(rest);
      return 0;
    }
    if (command === 'serve') {
      await runServe(rest);
      return 0;
    }
    throw new UsageError(command ? `unknown command ${command}` : 'missing command');
  } catch (err) {
    if (err instanceof UsageError || (err as { code?: string }).code === 'ERR_PARSE_ARGS_UNKNOWN_OPTION') {
      console.error(`usage error: ${(err as Error).message}`);
      console.error(USAGE);
      return 1;
    }
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
}

if (require.main === module) {
  main(process.argv.slice(2)).then((code) => {
    // serve keeps the process alive on its stdin listener; train and
    // failures fall through here
    if (code !== 0) process.exit(code);
  });
}
