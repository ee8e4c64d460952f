/** Readers for the simulator's run-directory layout.
 *
 * Everything plotted is taken verbatim from aggregate.csv; this layer
 * never recomputes a statistic. Schema violations raise DataError with
 * the offending path in the message.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import Papa from "papaparse";

import { parseSolveReport } from "./report";
import {
  AggregateSeries,
  AlphaMode,
  DataError,
  RunData,
  RunManifest,
} from "./types";

export const AGGREGATE_COLUMNS = [
  "step",
  "social_mean",
  "social_sd",
  "social_ci95",
  "pol_mean",
  "pol_sd",
  "pol_ci95",
  "sd_mean",
  "sd_sd",
  "sd_ci95",
  "seeds",
  "window",
] as const;

const MANIFEST_FORMAT = "routegame-manifest/1";

function numeric(row: Record<string, string>, col: string, where: string): number {
  const raw = row[col];
  const value = Number(raw);
  if (raw === undefined || raw === "" || Number.isNaN(value)) {
    throw new DataError(`${where}: column ${col} has non-numeric value ${raw!}`);
  }
  return value;
}

export function readAggregateCsv(file: string): AggregateSeries {
  if (!fs.existsSync(file)) {
    throw new DataError(`missing aggregate file ${file}`);
  }
  const text = fs.readFileSync(file, "utf-8");
  const parsed = Papa.parse<Record<string, string>>(text.trim(), {
    header: true,
    skipEmptyLines: true,
  });
  const got = (parsed.meta.fields ?? []).join(",");
  const want = AGGREGATE_COLUMNS.join(",");
  if (got !== want) {
    throw new DataError(`${file}: unexpected header ${got || "<empty>"}`);
  }
  if (parsed.data.length === 0) {
    throw new DataError(`${file}: no data rows`);
  }
  const series: AggregateSeries = {
    step: [],
    socialMean: [],
    socialCi95: [],
    polMean: [],
    polCi95: [],
    sdMean: [],
    sdCi95: [],
    seeds: numeric(parsed.data[0]!, "seeds", file),
    window: numeric(parsed.data[0]!, "window", file),
  };
  for (const row of parsed.data) {
    series.step.push(numeric(row, "step", file));
    series.socialMean.push(numeric(row, "social_mean", file));
    series.socialCi95.push(numeric(row, "social_ci95", file));
    series.polMean.push(numeric(row, "pol_mean", file));
    series.polCi95.push(numeric(row, "pol_ci95", file));
    series.sdMean.push(numeric(row, "sd_mean", file));
    series.sdCi95.push(numeric(row, "sd_ci95", file));
  }
  return series;
}

function parseAlphaMode(raw: unknown, where: string): AlphaMode {
  const mode = raw as Record<string, unknown>;
  if (mode && mode["kind"] === "uniform" && typeof mode["value"] === "number") {
    return { kind: "uniform", value: mode["value"] };
  }
  if (
    mode &&
    mode["kind"] === "ratio" &&
    typeof mode["mean"] === "number" &&
    typeof mode["ratio"] === "string" &&
    Array.isArray(mode["resolved"])
  ) {
    return {
      kind: "ratio",
      mean: mode["mean"],
      ratio: mode["ratio"],
      resolved: mode["resolved"] as number[],
    };
  }
  throw new DataError(`${where}: unrecognized alpha_mode ${JSON.stringify(raw)}`);
}

export function readManifest(file: string): RunManifest {
  if (!fs.existsSync(file)) {
    throw new DataError(`missing manifest ${file}`);
  }
  let doc: Record<string, unknown>;
  try {
    doc = JSON.parse(fs.readFileSync(file, "utf-8"));
  } catch (err) {
    throw new DataError(`${file}: not valid JSON (${String(err)})`);
  }
  if (doc["format"] !== MANIFEST_FORMAT) {
    throw new DataError(
      `${file}: format ${String(doc["format"])} is not ${MANIFEST_FORMAT}`,
    );
  }
  const scenario = doc["scenario"] as Record<string, unknown> | undefined;
  // so_cost is serialized as a decimal string to keep the JSON exact
  const soCost = Number(doc["so_cost"]);
  if (
    typeof doc["run_id"] !== "string" ||
    typeof doc["steps"] !== "number" ||
    typeof doc["window"] !== "number" ||
    doc["so_cost"] == null ||
    !Number.isFinite(soCost) ||
    typeof doc["so_certified"] !== "boolean" ||
    typeof scenario?.["name"] !== "string"
  ) {
    throw new DataError(`${file}: missing required manifest fields`);
  }
  return {
    runId: doc["run_id"],
    scenarioName: scenario["name"],
    steps: doc["steps"],
    window: doc["window"],
    soCost,
    soCertified: doc["so_certified"],
    alphaMode: parseAlphaMode(doc["alpha_mode"], file),
  };
}

/** Load one run directory (manifest + aggregate + optional solve.txt). */
export function loadRun(dir: string): RunData {
  if (!fs.existsSync(dir) || !fs.statSync(dir).isDirectory()) {
    throw new DataError(`run directory ${dir} does not exist`);
  }
  const manifest = readManifest(path.join(dir, "manifest.json"));
  const aggregate = readAggregateCsv(path.join(dir, "aggregate.csv"));
  if (aggregate.step.length !== manifest.steps) {
    throw new DataError(
      `${dir}: aggregate has ${aggregate.step.length} steps, manifest says ${manifest.steps}`,
    );
  }
  const reportPath = path.join(dir, "solve.txt");
  const report = fs.existsSync(reportPath)
    ? parseSolveReport(fs.readFileSync(reportPath, "utf-8"), reportPath)
    : null;
  return { dir, manifest, aggregate, report };
}

/** A short human label for legends: the ratio for ratio runs, else alpha. */
export function runLabel(run: RunData): string {
  const mode = run.manifest.alphaMode;
  if (mode.kind === "ratio") {
    return mode.ratio;
  }
  return `uniform ${mode.value}`;
}
