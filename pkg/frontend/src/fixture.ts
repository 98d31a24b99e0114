/**
 * Synthetic checkpoint generator for tests: a full VGG16-shaped weight set
 * in the tfjs layers layout, written from a seeded PRNG so every run (and
 * every platform) produces identical bytes.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { VGG16_STAGES } from "./plan.js";

/** Deterministic 32-bit PRNG; same seed, same stream, everywhere. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function randomTensor(rand: () => number, n: number): Float32Array {
  const out = new Float32Array(n);
  for (let i = 0; i < n; i++) out[i] = Math.fround(rand() - 0.5);
  return out;
}

interface FixtureWeight {
  name: string;
  shape: number[];
  data: Float32Array;
}

function fixtureWeights(seed: number): FixtureWeight[] {
  const rand = mulberry32(seed);
  const weights: FixtureWeight[] = [];
  let inC = 3;
  for (let s = 0; s < VGG16_STAGES.length; s++) {
    const [outC, layers] = VGG16_STAGES[s];
    for (let l = 1; l <= layers; l++) {
      const layerIn = l === 1 ? inC : outC;
      weights.push({
        name: `block${s + 1}_conv${l}/kernel`,
        shape: [3, 3, layerIn, outC],
        data: randomTensor(rand, 9 * layerIn * outC),
      });
      weights.push({
        name: `block${s + 1}_conv${l}/bias`,
        shape: [outC],
        data: randomTensor(rand, outC),
      });
    }
    inC = outC;
  }
  // Classifier head the exporter must ignore.
  weights.push({
    name: "predictions/kernel",
    shape: [32, 10],
    data: randomTensor(rand, 320),
  });
  weights.push({ name: "predictions/bias", shape: [10], data: randomTensor(rand, 10) });
  return weights;
}

/**
 * Write model.json plus binary shards under `dir`.
 *
 * The weights are split into two manifest groups and the second group into
 * two shards, with the cut landing mid-tensor, so readers are forced to
 * concatenate before slicing.
 */
export function writeFixtureCheckpoint(dir: string, seed = 0): void {
  fs.mkdirSync(dir, { recursive: true });
  const weights = fixtureWeights(seed);
  const splitAt = weights.findIndex((w) => w.name.startsWith("block4"));
  const groups = [weights.slice(0, splitAt), weights.slice(splitAt)];

  const manifest: { paths: string[]; weights: { name: string; shape: number[]; dtype: string }[] }[] = [];
  for (let g = 0; g < groups.length; g++) {
    const blob = Buffer.concat(
      groups[g].map((w) => {
        const b = Buffer.alloc(4 * w.data.length);
        const view = new DataView(b.buffer, b.byteOffset, b.byteLength);
        for (let i = 0; i < w.data.length; i++) view.setFloat32(4 * i, w.data[i], true);
        return b;
      }),
    );
    let paths: string[];
    if (g === 1) {
      const cut = 1048573; // prime-ish odd offset, never a tensor boundary
      paths = [`group${g + 1}-shard1of2.bin`, `group${g + 1}-shard2of2.bin`];
      fs.writeFileSync(path.join(dir, paths[0]), blob.subarray(0, cut));
      fs.writeFileSync(path.join(dir, paths[1]), blob.subarray(cut));
    } else {
      paths = [`group${g + 1}-shard1of1.bin`];
      fs.writeFileSync(path.join(dir, paths[0]), blob);
    }
    manifest.push({
      paths,
      weights: groups[g].map((w) => ({ name: w.name, shape: w.shape, dtype: "float32" })),
    });
  }

  const doc = {
    format: "layers-model",
    generatedBy: "fixture",
    convertedBy: "fixture",
    modelTopology: {},
    weightsManifest: manifest,
  };
  fs.writeFileSync(path.join(dir, "model.json"), JSON.stringify(doc));
}

/** Direct access to the generated values, for spot checks in tests. */
export function fixtureTensor(seed: number, name: string): { shape: number[]; data: Float32Array } {
  const w = fixtureWeights(seed).find((x) => x.name === name);
  if (!w) throw new Error(`no fixture tensor ${name}`);
  return { shape: w.shape, data: w.data };
}
