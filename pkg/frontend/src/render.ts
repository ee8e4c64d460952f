/** Server-side SVG rendering of figure presets from run directories. */

import * as fs from "node:fs";
import * as path from "node:path";

import * as echarts from "echarts";

import { buildPanelOption } from "./chart";
import { loadRun } from "./csv";
import { buildPanels, PresetName } from "./presets";
import { PanelSpec } from "./types";

export interface RenderSize {
  width: number;
  height: number;
}

export const DEFAULT_SIZE: RenderSize = { width: 840, height: 460 };

/** Rewrite renderer-generated id/class tokens (zr<N>-...) to a stable,
 * first-appearance numbering so identical inputs give identical bytes.
 */
function stabilizeSvgIds(svg: string): string {
  const seen = new Map<string, string>();
  return svg.replace(/zr\d+-[A-Za-z0-9-]+/g, (token) => {
    let stable = seen.get(token);
    if (stable === undefined) {
      stable = `g${seen.size}`;
      seen.set(token, stable);
    }
    return stable;
  });
}

export function renderPanelSvg(panel: PanelSpec, size: RenderSize = DEFAULT_SIZE): string {
  const chart = echarts.init(null, null, {
    renderer: "svg",
    ssr: true,
    width: size.width,
    height: size.height,
  });
  try {
    chart.setOption(buildPanelOption(panel));
    return stabilizeSvgIds(chart.renderToSVGString());
  } finally {
    chart.dispose();
  }
}

/** Render every panel of a preset to `<out>/<preset>-<panel>.svg`.
 *
 * Reads the run directories, never writes into them, and overwrites any
 * previous output files so re-renders are idempotent.  Returns the written
 * paths in panel order.
 */
export function renderPreset(
  preset: PresetName,
  runDirs: string[],
  outDir: string,
  size: RenderSize = DEFAULT_SIZE,
): string[] {
  const runs = runDirs.map(loadRun);
  const panels = buildPanels(preset, runs);
  fs.mkdirSync(outDir, { recursive: true });
  const written: string[] = [];
  for (const panel of panels) {
    const file = path.join(outDir, `${preset}-${panel.id}.svg`);
    fs.writeFileSync(file, renderPanelSvg(panel, size), "utf8");
    written.push(file);
  }
  return written;
}
