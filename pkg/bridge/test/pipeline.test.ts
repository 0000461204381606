import { spawnSync } from 'child_process';
import * as fs from 'fs';
import * as path from 'path';
import { describe, expect, it } from 'vitest';
import { TrainResult, trainModel, windowMean } from '../src/train';
import { BRIDGE_ROOT, CLI_JS, MANIFEST_PATH, RUN_DIR, TRAIN_DIR } from './paths';

let trained: TrainResult | null = null;

describe('training pipeline', () => {
  it('cuts the smoothed loss by at least 20% across 200 iterations', {
    timeout: 600_000,
  }, async () => {
    trained = await trainModel({
      dataDir: TRAIN_DIR,
      manifestPath: MANIFEST_PATH,
      outDir: path.join(RUN_DIR, 'train200'),
      iterations: 200,
      seed: 0,
    });
    expect(trained.poolSize).toBeGreaterThanOrEqual(32);
    expect(trained.losses.length).toBe(200);
    for (const loss of trained.losses) {
      expect(Number.isFinite(loss)).toBe(true);
      expect(loss).toBeGreaterThan(0);
    }
    const first = windowMean(trained.losses, 20, false);
    const last = windowMean(trained.losses, 20, true);
    expect(last).toBeLessThanOrEqual(0.8 * first);
    expect(fs.existsSync(trained.checkpointPath)).toBe(true);
    expect(fs.readFileSync(trained.lossLogPath, 'utf8').trimEnd().split('\n')).toHaveLength(200);
  });

  it('reproduces the loss log byte for byte under a fixed seed', {
    timeout: 300_000,
  }, async () => {
    const opts = {
      dataDir: TRAIN_DIR,
      manifestPath: MANIFEST_PATH,
      iterations: 10,
      seed: 123,
    };
    const a = await trainModel({ ...opts, outDir: path.join(RUN_DIR, 'det-a') });
    const b = await trainModel({ ...opts, outDir: path.join(RUN_DIR, 'det-b') });
    const logA = fs.readFileSync(a.lossLogPath);
    const logB = fs.readFileSync(b.lossLogPath);
    expect(logA.equals(logB)).toBe(true);
    const c = await trainModel({
      ...opts, seed: 124, outDir: path.join(RUN_DIR, 'det-c'),
    });
    expect(fs.readFileSync(c.lossLogPath).equals(logA)).toBe(false);
  });

  it('passes the parent toolkit conformance suite when served', {
    timeout: 300_000,
  }, () => {
    if (trained === null) throw new Error('training run must complete first');
    const serveCmd = [
      process.execPath, CLI_JS, 'serve',
      '--checkpoint', trained.checkpointPath,
      '--backend', 'wasm',
    ].join(' ');
    const result = spawnSync(
      'python3',
      ['-m', 'pytest', 'tests/test_acceptance.py', '-k', 'external_backend', '-v'],
      {
        cwd: path.dirname(BRIDGE_ROOT),
        env: { ...process.env, AMODALFORGE_BACKEND_CMD: serveCmd },
        encoding: 'utf8',
        timeout: 240_000,
      },
    );
    const transcript = `${result.stdout}\n${result.stderr}`;
    expect(result.status, transcript).toBe(0);
    expect(transcript).toContain('1 passed');
    expect(transcript).not.toContain('skipped');
  });
});
