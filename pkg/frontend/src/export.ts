/**
 * Turn a checkpoint plus an export plan into a weight archive the scoring
 * engine loads directly.
 *
 * Kernels arrive in the source's [kH, kW, in, out] layout and are stored as
 * [out, in, kH, kW]. Values are copied verbatim: any per-filter rescaling is
 * the consumer's business, not the exporter's.
 */

import * as fs from "node:fs";
import { readCheckpoint, Checkpoint } from "./checkpoint.js";
import { ExportPlan, PlanError, sourceKernelShape, targetLayerNames, validatePlan } from "./plan.js";
import { packArchive, TensorEntry } from "./tnsa.js";

export interface ExportResult {
  outPath: string;
  entryNames: string[];
  byteLength: number;
}

function shapesEqual(a: number[], b: number[]): boolean {
  return a.length === b.length && a.every((d, i) => d === b[i]);
}

function transposeToOutInHW(src: Float32Array, kh: number, kw: number, inC: number, outC: number): Float32Array {
  const dst = new Float32Array(src.length);
  for (let o = 0; o < outC; o++) {
    for (let i = 0; i < inC; i++) {
      for (let y = 0; y < kh; y++) {
        for (let x = 0; x < kw; x++) {
          dst[((o * inC + i) * kh + y) * kw + x] = src[((y * kw + x) * inC + i) * outC + o];
        }
      }
    }
  }
  return dst;
}

/** Build the archive bytes for a plan. Deterministic: same checkpoint and
 *  plan always produce the same buffer. */
export function exportBytes(plan: ExportPlan, checkpoint?: Checkpoint): Buffer {
  validatePlan(plan);
  const ckpt = checkpoint ?? readCheckpoint(plan.source);

  const bySource = new Map(Object.entries(plan.mapping).map(([s, t]) => [t, s]));
  const entries: TensorEntry[] = [];
  for (const target of targetLayerNames()) {
    const sourceLayer = bySource.get(target)!;
    const kernel = ckpt.tensors.get(`${sourceLayer}/kernel`);
    const bias = ckpt.tensors.get(`${sourceLayer}/bias`);
    if (!kernel || !bias) {
      throw new PlanError(`checkpoint has no layer ${sourceLayer}`);
    }
    const want = sourceKernelShape(target);
    if (!shapesEqual(kernel.shape, want)) {
      throw new PlanError(
        `${sourceLayer}/kernel has shape [${kernel.shape}], expected [${want}]`,
      );
    }
    const [kh, kw, inC, outC] = want;
    if (!shapesEqual(bias.shape, [outC])) {
      throw new PlanError(`${sourceLayer}/bias has shape [${bias.shape}], expected [${outC}]`);
    }
    entries.push({
      name: `${target}.weight`,
      dims: [outC, inC, kh, kw],
      data: transposeToOutInHW(kernel.data, kh, kw, inC, outC),
    });
    entries.push({ name: `${target}.bias`, dims: [outC], data: bias.data });
  }

  entries.push({ name: "input.mean", dims: [3], data: Float32Array.from(plan.mean) });
  entries.push({ name: "input.std", dims: [3], data: Float32Array.from(plan.std) });

  if (plan.tables) {
    // Sorted so table order never depends on JSON key order.
    for (const name of Object.keys(plan.tables).sort()) {
      const values = plan.tables[name];
      entries.push({ name, dims: [values.length], data: Float32Array.from(values) });
    }
  }
  return packArchive(entries);
}

/** Export an archive to disk and report what was written. */
export function exportArchive(plan: ExportPlan, outPath: string): ExportResult {
  const buf = exportBytes(plan);
  fs.writeFileSync(outPath, buf);
  const names = targetLayerNames().flatMap((t) => [`${t}.weight`, `${t}.bias`]);
  names.push("input.mean", "input.std");
  if (plan.tables) names.push(...Object.keys(plan.tables).sort());
  return { outPath, entryNames: names, byteLength: buf.length };
}
