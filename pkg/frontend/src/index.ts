export { buildPanelOption } from "./chart";
export {
  AGGREGATE_COLUMNS,
  loadRun,
  readAggregateCsv,
  readManifest,
  runLabel,
} from "./csv";
export { buildPanels, isPreset, PRESETS, ratioValue } from "./presets";
export type { PresetName } from "./presets";
export { parseSolveReport } from "./report";
export { DEFAULT_SIZE, renderPanelSvg, renderPreset } from "./render";
export type { RenderSize } from "./render";
export * from "./types";
