/** Turn a panel spec into an echarts option: one mean line per series,
 * a 95% confidence band behind it, and horizontal reference lines.
 */

import type { EChartsOption, SeriesOption } from "echarts";

import { Metric, PanelSpec, RunData } from "./types";

const PALETTE = [
  "#5470c6",
  "#91cc75",
  "#fac858",
  "#ee6a7b",
  "#73c0de",
  "#3ba272",
];

function columns(run: RunData, metric: Metric): { mean: number[]; ci: number[] } {
  const agg = run.aggregate;
  switch (metric) {
    case "social":
      return { mean: agg.socialMean, ci: agg.socialCi95 };
    case "pol":
      return { mean: agg.polMean, ci: agg.polCi95 };
    case "sd":
      return { mean: agg.sdMean, ci: agg.sdCi95 };
  }
}

/** Mean line plus confidence band for one run.
 *
 * The band is two stacked transparent lines: the first carries the lower
 * bound, the second stacks the band width on top and fills the area between.
 */
function seriesFor(
  name: string,
  run: RunData,
  metric: Metric,
  color: string,
): SeriesOption[] {
  const { mean, ci } = columns(run, metric);
  const lower = mean.map((m, i) => m - (ci[i] ?? 0));
  const width = ci.map((c) => 2 * c);
  const stack = `band-${name}`;
  return [
    {
      name: `${name} (band lower)`,
      type: "line",
      data: lower,
      stack,
      silent: true,
      symbol: "none",
      lineStyle: { opacity: 0 },
      tooltip: { show: false },
    },
    {
      name: `${name} (band)`,
      type: "line",
      data: width,
      stack,
      silent: true,
      symbol: "none",
      lineStyle: { opacity: 0 },
      areaStyle: { color, opacity: 0.18 },
      tooltip: { show: false },
    },
    {
      name,
      type: "line",
      data: mean,
      symbol: "none",
      lineStyle: { color, width: 1.5 },
      itemStyle: { color },
      emphasis: { disabled: true },
    },
  ];
}

/** Axis extent covering every band edge and reference line, with padding. */
function yExtent(panel: PanelSpec): { min: number; max: number } {
  let lo = Infinity;
  let hi = -Infinity;
  for (const entry of panel.series) {
    const { mean, ci } = columns(entry.run, panel.metric);
    mean.forEach((m, i) => {
      lo = Math.min(lo, m - (ci[i] ?? 0));
      hi = Math.max(hi, m + (ci[i] ?? 0));
    });
  }
  for (const ref of panel.refs) {
    lo = Math.min(lo, ref.value);
    hi = Math.max(hi, ref.value);
  }
  const pad = 0.06 * (hi - lo || Math.abs(hi) || 1);
  return { min: lo - pad, max: hi + pad };
}

export function buildPanelOption(panel: PanelSpec): EChartsOption {
  const steps = panel.series[0]!.run.aggregate.step.map(String);
  const series: SeriesOption[] = [];
  panel.series.forEach((entry, i) => {
    series.push(
      ...seriesFor(entry.name, entry.run, panel.metric, PALETTE[i % PALETTE.length]!),
    );
  });
  if (panel.refs.length > 0 && series.length > 0) {
    // hang the reference lines off the last (visible) series
    const host = series[series.length - 1]!;
    (host as { markLine?: unknown }).markLine = {
      silent: true,
      symbol: "none",
      animation: false,
      lineStyle: { color: "#555", type: "dashed", width: 1 },
      label: { position: "insideEndTop", color: "#555" },
      data: panel.refs.map((ref) => ({
        yAxis: ref.value,
        label: { formatter: ref.label },
      })),
    };
  }
  return {
    animation: false,
    title: { text: panel.title, left: "center", textStyle: { fontSize: 14 } },
    legend:
      panel.series.length > 1
        ? {
            bottom: 0,
            data: panel.series.map((entry) => entry.name),
          }
        : undefined,
    grid: { left: 70, right: 30, top: 40, bottom: panel.series.length > 1 ? 60 : 40 },
    xAxis: {
      type: "category",
      name: "step",
      nameLocation: "middle",
      nameGap: 25,
      data: steps,
      axisLabel: { interval: Math.max(0, Math.floor(steps.length / 8) - 1) },
      axisTick: { show: false },
    },
    yAxis: {
      type: "value",
      name: panel.yLabel,
      nameLocation: "middle",
      nameGap: 50,
      ...yExtent(panel),
      axisLabel: { formatter: (v: number) => String(Number(v.toFixed(6))) },
    },
    series,
  };
}
