/**
 * Reader for pretrained checkpoints in the tfjs layers layout: a model.json
 * whose weightsManifest lists weight groups, each group stored as one or
 * more binary shards that concatenate into a flat buffer of raw tensor data.
 *
 * Strictly local: shard paths resolve relative to model.json and nothing is
 * ever fetched over the network.
 */

import * as fs from "node:fs";
import * as path from "node:path";

export interface SourceTensor {
  shape: number[];
  data: Float32Array;
}

export interface Checkpoint {
  /** Tensor name (e.g. "block1_conv1/kernel") to shape + values. */
  tensors: Map<string, SourceTensor>;
}

export class CheckpointError extends Error {}

interface ManifestWeight {
  name: string;
  shape: number[];
  dtype: string;
  quantization?: unknown;
}

interface ManifestGroup {
  paths: string[];
  weights: ManifestWeight[];
}

// Bytes per element for the dtypes tfjs shards actually contain. Only
// float32 tensors are usable downstream; the others just have to be
// skipped with the right stride so later offsets stay correct.
const DTYPE_BYTES: Record<string, number> = {
  float32: 4,
  int32: 4,
  bool: 1,
};

function numel(shape: number[]): number {
  let n = 1;
  for (const d of shape) {
    if (!Number.isInteger(d) || d < 0) {
      throw new CheckpointError(`bad shape [${shape}]`);
    }
    n *= d;
  }
  return n;
}

/**
 * Load every float32 tensor from a checkpoint.
 *
 * `source` may be the model.json file itself or the directory holding it.
 */
export function readCheckpoint(source: string): Checkpoint {
  let jsonPath = source;
  if (fs.existsSync(source) && fs.statSync(source).isDirectory()) {
    jsonPath = path.join(source, "model.json");
  }
  if (!fs.existsSync(jsonPath)) {
    throw new CheckpointError(`checkpoint not found: ${jsonPath}`);
  }

  let manifest: ManifestGroup[];
  try {
    const doc = JSON.parse(fs.readFileSync(jsonPath, "utf-8"));
    manifest = doc.weightsManifest;
  } catch (err) {
    throw new CheckpointError(`unreadable model.json: ${(err as Error).message}`);
  }
  if (!Array.isArray(manifest) || manifest.length === 0) {
    throw new CheckpointError("model.json has no weightsManifest");
  }

  const dir = path.dirname(jsonPath);
  const tensors = new Map<string, SourceTensor>();
  for (const group of manifest) {
    const shards = group.paths.map((p) => {
      const shardPath = path.join(dir, p);
      if (!fs.existsSync(shardPath)) {
        throw new CheckpointError(`missing weight shard: ${p}`);
      }
      return fs.readFileSync(shardPath);
    });
    const blob = Buffer.concat(shards);
    const view = new DataView(blob.buffer, blob.byteOffset, blob.byteLength);

    let off = 0;
    for (const w of group.weights) {
      if (w.quantization) {
        throw new CheckpointError(`quantized weights unsupported: ${w.name}`);
      }
      const itemBytes = DTYPE_BYTES[w.dtype];
      if (itemBytes === undefined) {
        throw new CheckpointError(`unsupported dtype ${w.dtype} for ${w.name}`);
      }
      const n = numel(w.shape);
      const nbytes = n * itemBytes;
      if (off + nbytes > blob.length) {
        throw new CheckpointError(`weight data truncated at ${w.name}`);
      }
      if (w.dtype === "float32") {
        if (tensors.has(w.name)) {
          throw new CheckpointError(`duplicate tensor name ${w.name}`);
        }
        const data = new Float32Array(n);
        for (let i = 0; i < n; i++) {
          data[i] = view.getFloat32(off + 4 * i, true);
        }
        tensors.set(w.name, { shape: w.shape.slice(), data });
      }
      off += nbytes;
    }
    if (off !== blob.length) {
      throw new CheckpointError(
        `group shards hold ${blob.length} bytes but weights describe ${off}`,
      );
    }
  }
  return { tensors };
}
