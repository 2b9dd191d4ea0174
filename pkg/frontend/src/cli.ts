/**
 * Trainer CLI:
 *
 *   node --experimental-strip-types src/cli.ts train  --data <seqdir> --out <dir> [--epochs N] [--code-size B] [--seed S]
 *   node --experimental-strip-types src/cli.ts export --checkpoint <dir>/checkpoint.json --data <seqdir> --out <dir>
 *
 * `train` writes checkpoint.json, training_log.csv, and heldout.json;
 * `export` writes one .scnb bundle per frame of the sequence.
 */

import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { loadSequence } from "./dataset.js";
import { exportBundles } from "./export.js";
import { ToyCvae } from "./model.js";
import { logToCsv, trainModel } from "./train.js";

function parseArgs(argv: string[]): Record<string, string> {
  const out: Record<string, string> = {};
  for (let i = 0; i < argv.length; i += 2) {
    if (!argv[i].startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`malformed arguments near ${argv[i]}`);
    }
    out[argv[i].slice(2)] = argv[i + 1];
  }
  return out;
}

function require_(args: Record<string, string>, key: string): string {
  const value = args[key];
  if (!value) throw new Error(`--${key} is required`);
  return value;
}

async function cmdTrain(args: Record<string, string>): Promise<number> {
  const dataDir = require_(args, "data");
  const outDir = require_(args, "out");
  mkdirSync(outDir, { recursive: true });
  const overrides: Record<string, number> = {};
  if (args.epochs) overrides.epochs = parseInt(args.epochs, 10);
  if (args["code-size"]) overrides.codeSize = parseInt(args["code-size"], 10);
  if (args.seed) overrides.seed = parseInt(args.seed, 10);
  const result = await trainModel(dataDir, overrides);
  writeFileSync(join(outDir, "checkpoint.json"), result.model.saveJson());
  writeFileSync(join(outDir, "training_log.csv"), logToCsv(result.log));
  writeFileSync(join(outDir, "heldout.json"), JSON.stringify(result.heldOut, null, 2) + "\n");
  console.log(`loss ${result.initialLoss.toFixed(4)} -> ${result.finalLoss.toFixed(4)}`);
  console.log(
    `held-out depth L1 ${result.heldOut.zeroDepthL1.toFixed(4)} -> ${result.heldOut.encodedDepthL1.toFixed(4)}, ` +
      `label acc ${result.heldOut.zeroLabelAccuracy.toFixed(4)} -> ${result.heldOut.encodedLabelAccuracy.toFixed(4)}`,
  );
  return 0;
}

function cmdExport(args: Record<string, string>): number {
  const model = ToyCvae.loadJson(readFileSync(require_(args, "checkpoint"), "utf-8"));
  const ds = loadSequence(require_(args, "data"));
  const written = exportBundles(model, ds, require_(args, "out"));
  console.log(`wrote ${written.length} bundles`);
  return 0;
}

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  try {
    const args = parseArgs(rest);
    if (command === "train") return await cmdTrain(args);
    if (command === "export") return cmdExport(args);
    console.error(`unknown command ${command ?? "(none)"}; use train or export`);
    return 1;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
}

if (process.argv[1] && (process.argv[1].endsWith("cli.ts") || process.argv[1].endsWith("cli.js"))) {
  main(process.argv.slice(2)).then((code) => process.exit(code));
}
