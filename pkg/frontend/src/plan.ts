/**
 * Export plans: which checkpoint tensors become which archive entries.
 *
 * The scoring engine expects the thirteen 3x3 conv layers of a VGG16
 * feature stack, named conv{stage}_{layer} with 1-based indices, plus the
 * input normalization vectors. A plan pins the source checkpoint, the
 * layer-name mapping, and the constants to embed.
 */

/** (channels, conv layers) per stage of the five-stage VGG16 trunk. */
export const VGG16_STAGES: ReadonlyArray<readonly [number, number]> = [
  [64, 2],
  [128, 2],
  [256, 3],
  [512, 3],
  [512, 3],
];

export interface ExportPlan {
  /** Checkpoint identifier: model.json path or its directory. */
  source: string;
  /** Source layer name -> target conv name ("conv3_2"). Tensors are read
   *  from "<source layer>/kernel" and "<source layer>/bias". */
  mapping: Record<string, string>;
  /** Channel means embedded as the input.mean entry. */
  mean: [number, number, number];
  /** Channel scales embedded as the input.std entry; must be positive. */
  std: [number, number, number];
  /** Optional extra entries (published stage weight tables etc.), each an
   *  archive entry name with a flat list of values. */
  tables?: Record<string, number[]>;
}

export class PlanError extends Error {}

/** The 13 conv names in network order: conv1_1 .. conv5_3. */
export function targetLayerNames(): string[] {
  const names: string[] = [];
  for (let s = 0; s < VGG16_STAGES.length; s++) {
    for (let l = 1; l <= VGG16_STAGES[s][1]; l++) {
      names.push(`conv${s + 1}_${l}`);
    }
  }
  return names;
}

/** Expected kernel shape per target layer, in source (HWIO) layout. */
export function sourceKernelShape(target: string): number[] {
  const order = targetLayerNames();
  const idx = order.indexOf(target);
  if (idx < 0) throw new PlanError(`unknown layer ${target}`);
  const stage = Number(target[4]) - 1;
  const inC = idx === 0 ? 3 : VGG16_STAGES[target.endsWith("_1") ? stage - 1 : stage][0];
  return [3, 3, inC, VGG16_STAGES[stage][0]];
}

// Defaults match the ImageNet statistics the pretrained weights were
// trained under; embedding them keeps the archive self-describing.
export const DEFAULT_MEAN: [number, number, number] = [0.485, 0.456, 0.406];
export const DEFAULT_STD: [number, number, number] = [0.229, 0.224, 0.225];

/** Plan for Keras-style VGG16 checkpoints (block{s}_conv{l} layer names). */
export function vgg16KerasPlan(
  source: string,
  opts: { mean?: [number, number, number]; std?: [number, number, number]; tables?: Record<string, number[]> } = {},
): ExportPlan {
  const mapping: Record<string, string> = {};
  for (const target of targetLayerNames()) {
    const stage = target[4];
    const layer = target[6];
    mapping[`block${stage}_conv${layer}`] = target;
  }
  return {
    source,
    mapping,
    mean: opts.mean ?? DEFAULT_MEAN,
    std: opts.std ?? DEFAULT_STD,
    tables: opts.tables,
  };
}

/** Reject plans that do not cover the 13 conv layers exactly once. */
export function validatePlan(plan: ExportPlan): void {
  const wanted = targetLayerNames();
  const covered = Object.values(plan.mapping);
  const missing = wanted.filter((n) => !covered.includes(n));
  if (missing.length > 0) {
    throw new PlanError(`mapping misses layers: ${missing.join(", ")}`);
  }
  const extra = covered.filter((n) => !wanted.includes(n));
  if (extra.length > 0) {
    throw new PlanError(`mapping names unknown layers: ${extra.join(", ")}`);
  }
  if (covered.length !== wanted.length) {
    const dupes = covered.filter((n, i) => covered.indexOf(n) !== i);
    throw new PlanError(`mapping targets duplicated: ${[...new Set(dupes)].join(", ")}`);
  }
  for (const v of plan.std) {
    if (!(v > 0) || !Number.isFinite(v)) {
      throw new PlanError(`input scales must be positive, got ${plan.std}`);
    }
  }
  for (const v of plan.mean) {
    if (!Number.isFinite(v)) {
      throw new PlanError(`input means must be finite, got ${plan.mean}`);
    }
  }
}
