/** Data contracts for run directories produced by the simulator CLI. */

/** Per-step cross-seed statistics parsed from aggregate.csv. */
export interface AggregateSeries {
  step: number[];
  socialMean: number[];
  socialCi95: number[];
  polMean: number[];
  polCi95: number[];
  sdMean: number[];
  sdCi95: number[];
  seeds: number;
  window: number;
}

export type AlphaMode =
  | { kind: "uniform"; value: number }
  | { kind: "ratio"; mean: number; ratio: string; resolved: number[] };

/** The subset of manifest.json the plotting layer relies on. */
export interface RunManifest {
  runId: string;
  scenarioName: string;
  steps: number;
  window: number;
  soCost: number;
  soCertified: boolean;
  alphaMode: AlphaMode;
}

/** Reference values parsed from a plain-text solver report (solve.txt). */
export interface SolveReport {
  neTotal: number;
  soTotal: number;
  equilibriumSd: number;
}

/** One loaded run directory. */
export interface RunData {
  dir: string;
  manifest: RunManifest;
  aggregate: AggregateSeries;
  /** Present when the run directory carries a solve.txt report. */
  report: SolveReport | null;
}

export type Metric = "social" | "pol" | "sd";

export interface RefLine {
  label: string;
  value: number;
}

/** One output image: a metric over steps for one or more runs. */
export interface PanelSpec {
  id: string;
  metric: Metric;
  title: string;
  yLabel: string;
  series: Array<{ name: string; run: RunData }>;
  refs: RefLine[];
}

/** Raised for malformed inputs; the CLI turns it into a clean exit(1). */
export class DataError extends Error {}
