/** Figure presets: how run directories map onto panels.
 *
 * fig3  one equal-rate run        -> social + disparity panels
 * fig4  rate-ratio sweep          -> one disparity panel, series per ratio
 * fig5  per-phase uniform runs    -> loss-ratio + disparity panels per run
 * fig6  rate-ratio sweep          -> loss-ratio + disparity panels, series per ratio
 */

import { runLabel } from "./csv";
import { DataError, PanelSpec, RefLine, RunData } from "./types";

export const PRESETS = ["fig3", "fig4", "fig5", "fig6"] as const;
export type PresetName = (typeof PRESETS)[number];

export function isPreset(name: string): name is PresetName {
  return (PRESETS as readonly string[]).includes(name);
}

/** Numeric value of a run's rate ratio; uniform runs count as 1. */
export function ratioValue(run: RunData): number {
  const mode = run.manifest.alphaMode;
  if (mode.kind === "uniform") {
    return 1;
  }
  const m = /^(\d+):(\d+)$/.exec(mode.ratio);
  if (!m) {
    throw new DataError(`${run.dir}: malformed ratio ${mode.ratio}`);
  }
  return Number(m[1]) / Number(m[2]);
}

function requireSharedSteps(runs: RunData[]): void {
  const steps = new Set(runs.map((r) => r.aggregate.step.length));
  if (steps.size > 1) {
    throw new DataError(
      `runs disagree on step counts: ${[...steps].sort((a, b) => a - b).join(", ")}`,
    );
  }
}

function requireSharedScenario(runs: RunData[]): void {
  const names = new Set(runs.map((r) => r.manifest.scenarioName));
  if (names.size > 1) {
    throw new DataError(
      `runs mix scenarios: ${[...names].sort().join(", ")}`,
    );
  }
}

function socialRefs(run: RunData): RefLine[] {
  if (run.report) {
    return [
      { label: `NE ${run.report.neTotal}`, value: run.report.neTotal },
      { label: `SO ${run.report.soTotal}`, value: run.report.soTotal },
    ];
  }
  // without a solver report the manifest still carries the optimum
  return [{ label: `SO ${run.manifest.soCost}`, value: run.manifest.soCost }];
}

function sdRefs(run: RunData): RefLine[] {
  if (run.report) {
    return [
      {
        label: `equilibrium SD ${run.report.equilibriumSd}`,
        value: run.report.equilibriumSd,
      },
    ];
  }
  return [];
}

const POL_REF: RefLine = { label: "PoL 1", value: 1 };

/** Ratio runs sorted fastest-first-group first (5:1 before 1:5). */
function byDescendingRatio(runs: RunData[]): RunData[] {
  return [...runs].sort((a, b) => ratioValue(b) - ratioValue(a));
}

export function buildPanels(preset: PresetName, runs: RunData[]): PanelSpec[] {
  if (runs.length === 0) {
    throw new DataError("no run directories given");
  }
  requireSharedSteps(runs);
  switch (preset) {
    case "fig3": {
      if (runs.length !== 1) {
        throw new DataError(`fig3 takes exactly one run, got ${runs.length}`);
      }
      const run = runs[0]!;
      const name = runLabel(run);
      return [
        {
          id: "social",
          metric: "social",
          title: `${run.manifest.scenarioName}: social cost`,
          yLabel: "social cost",
          series: [{ name, run }],
          refs: socialRefs(run),
        },
        {
          id: "sd",
          metric: "sd",
          title: `${run.manifest.scenarioName}: source disparity`,
          yLabel: "source disparity",
          series: [{ name, run }],
          refs: sdRefs(run),
        },
      ];
    }
    case "fig4": {
      if (runs.length < 2) {
        throw new DataError(`fig4 compares ratios; give at least two runs`);
      }
      requireSharedScenario(runs);
      const ordered = byDescendingRatio(runs);
      return [
        {
          id: "sd",
          metric: "sd",
          title: `${ordered[0]!.manifest.scenarioName}: source disparity by rate ratio`,
          yLabel: "source disparity",
          series: ordered.map((run) => ({ name: runLabel(run), run })),
          refs: sdRefs(ordered[0]!),
        },
      ];
    }
    case "fig5": {
      return runs.flatMap((run) => {
        const scen = run.manifest.scenarioName;
        return [
          {
            id: `pol-${scen}`,
            metric: "pol" as const,
            title: `${scen}: price of learning`,
            yLabel: "price of learning",
            series: [{ name: runLabel(run), run }],
            refs: [POL_REF],
          },
          {
            id: `sd-${scen}`,
            metric: "sd" as const,
            title: `${scen}: source disparity`,
            yLabel: "source disparity",
            series: [{ name: runLabel(run), run }],
            refs: sdRefs(run),
          },
        ];
      });
    }
    case "fig6": {
      if (runs.length < 2) {
        throw new DataError(`fig6 compares ratios; give at least two runs`);
      }
      requireSharedScenario(runs);
      const ordered = byDescendingRatio(runs);
      const scen = ordered[0]!.manifest.scenarioName;
      return [
        {
          id: "pol",
          metric: "pol",
          title: `${scen}: price of learning by rate ratio`,
          yLabel: "price of learning",
          series: ordered.map((run) => ({ name: runLabel(run), run })),
          refs: [POL_REF],
        },
        {
          id: "sd",
          metric: "sd",
          title: `${scen}: source disparity by rate ratio`,
          yLabel: "source disparity",
          series: ordered.map((run) => ({ name: runLabel(run), run })),
          refs: sdRefs(ordered[0]!),
        },
      ];
    }
  }
}
