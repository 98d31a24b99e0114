#!/usr/bin/env node
/**
 * export-weights: convert a pretrained VGG16 checkpoint into a TNSA weight
 * archive.
 *
 * Usage:
 *   export-weights --source PATH --out FILE [options]
 *
 * Options:
 *   --source PATH    checkpoint: model.json or the directory holding it
 *   --out FILE       archive file to write
 *   --mean R,G,B     input channel means to embed (default ImageNet)
 *   --std R,G,B      input channel scales to embed (default ImageNet)
 *   --mapping FILE   JSON {sourceLayer: convName} overriding the Keras map
 *   --tables FILE    JSON {entryName: [values...]} of extra weight tables
 *
 * The source must already be on disk; nothing is downloaded.
 */

import * as fs from "node:fs";
import * as process from "node:process";
import { pathToFileURL } from "node:url";
import { exportArchive } from "./export.js";
import { vgg16KerasPlan } from "./plan.js";

function usage(): never {
  console.error(
    "usage: export-weights --source PATH --out FILE [--mean R,G,B] [--std R,G,B] [--mapping FILE] [--tables FILE]",
  );
  process.exit(1);
}

function parseTriple(text: string, flag: string): [number, number, number] {
  const parts = text.split(",").map(Number);
  if (parts.length !== 3 || parts.some((v) => !Number.isFinite(v))) {
    console.error(`${flag} expects three comma-separated numbers, got "${text}"`);
    process.exit(1);
  }
  return [parts[0], parts[1], parts[2]];
}

export function main(argv: string[]): void {
  const opts: Record<string, string> = {};
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (!a.startsWith("--") || i + 1 >= argv.length) usage();
    opts[a.slice(2)] = argv[++i];
  }
  const known = new Set(["source", "out", "mean", "std", "mapping", "tables"]);
  for (const k of Object.keys(opts)) {
    if (!known.has(k)) usage();
  }
  if (!opts.source || !opts.out) usage();

  try {
    const plan = vgg16KerasPlan(opts.source, {
      mean: opts.mean ? parseTriple(opts.mean, "--mean") : undefined,
      std: opts.std ? parseTriple(opts.std, "--std") : undefined,
      tables: opts.tables ? JSON.parse(fs.readFileSync(opts.tables, "utf-8")) : undefined,
    });
    if (opts.mapping) {
      plan.mapping = JSON.parse(fs.readFileSync(opts.mapping, "utf-8"));
    }
    const result = exportArchive(plan, opts.out);
    console.log(
      `wrote ${result.entryNames.length} entries (${result.byteLength} bytes) to ${result.outPath}`,
    );
  } catch (err) {
    console.error(`export failed: ${(err as Error).message}`);
    process.exit(2);
  }
}

const invokedDirectly =
  process.argv[1] !== undefined && import.meta.url === pathToFileURL(process.argv[1]).href;
if (invokedDirectly) main(process.argv.slice(2));
