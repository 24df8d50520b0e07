import { column, loadTable, Table } from "./csv.js";
import { FigureSpec, FigureStyle, REQUIRED_COLUMNS } from "./schema.js";
import { Chart, Envelope, Marker, PALETTE, renderChart, Series } from "./svg.js";

const DEFAULT_SIZE = { width: 640, height: 420 };

function baseChart(style: FigureStyle | undefined, defaults: Partial<Chart>): Chart {
  return {
    width: style?.width ?? DEFAULT_SIZE.width,
    height: style?.height ?? DEFAULT_SIZE.height,
    title: style?.title ?? defaults.title,
    xLabel: style?.x_label ?? defaults.xLabel,
    yLabel: style?.y_label ?? defaults.yLabel,
    xLimits: style?.x_limits,
    yLimits: style?.y_limits,
    envelopes: [],
    series: [],
    markers: [],
    legend: true,
  };
}

function lineSeries(
  table: Table,
  xCol: string,
  spec: [col: string, label: string][],
): Series[] {
  const x = column(table, xCol);
  return spec.map(([col, label], i) => ({
    label,
    x,
    y: column(table, col),
    color: PALETTE[i % PALETTE.length],
  }));
}

function comparisonChart(table: Table, style?: FigureStyle): Chart {
  const chart = baseChart(style, {
    title: "Principal value by contracting regime",
    xLabel: "initial belief p0",
    yLabel: "value",
  });
  chart.series = lineSeries(table, "p0", [
    ["v_c", "conditional"],
    ["v_s", "screening"],
    ["v_uc", "unconditional"],
  ]);
  return chart;
}

function valueChart(table: Table, style?: FigureStyle): Chart {
  const chart = baseChart(style, {
    title: "Single-contract values",
    xLabel: "initial belief p0",
    yLabel: "value",
  });
  chart.series = lineSeries(table, "p0", [
    ["v_c", "conditional"],
    ["v_uc", "unconditional"],
  ]);
  return chart;
}

function argmaxChart(table: Table, style?: FigureStyle): Chart {
  const chart = baseChart(style, {
    title: "Optimal initial promises",
    xLabel: "initial belief p0",
    yLabel: "promised utility",
  });
  chart.series = lineSeries(table, "p0", [
    ["y0_c", "y0 (conditional)"],
    ["y1_c", "y1 (conditional)"],
    ["y0_uc", "y0 (unconditional)"],
    ["y1_uc", "y1 (unconditional)"],
  ]);
  chart.series[1].dash = "5 3";
  chart.series[3].dash = "5 3";
  return chart;
}

/** Nearest stored value of a (small, repeating) coordinate column. */
function nearestLevel(values: number[], target: number): number {
  let best = values[0];
  for (const v of values) {
    if (Math.abs(v - target) < Math.abs(best - target)) best = v;
  }
  return best;
}

function sliceChart(table: Table, style?: FigureStyle): Chart {
  const tPick = nearestLevel(column(table, "t"), style?.time ?? 0.0);
  const pPick = nearestLevel(
    column(table, "p").filter((_, i) => table.rows[i].t === tPick),
    style?.belief ?? 0.5,
  );
  const rows = table.rows.filter((r) => r.t === tPick && r.p === pPick);
  const chart = baseChart(style, {
    title: `Value slice at t=${tPick}, p=${pPick}`,
    xLabel: "promise spread y0 - y1",
    yLabel: "reduced value w",
  });
  chart.series = [
    {
      label: "w",
      x: rows.map((r) => r.y),
      y: rows.map((r) => r.w),
      color: PALETTE[0],
    },
  ];
  chart.markers = rows
    .filter((r) => r.boundary_flag !== 0)
    .map((r) => ({ x: r.y, y: r.w, color: PALETTE[1] }));
  return chart;
}

function trajectoryChart(table: Table, style?: FigureStyle): Chart {
  const chart = baseChart(style, {
    title: "Promise-gap paths against the credible band",
    xLabel: "time",
    yLabel: "gap Y0 - Y1",
  });
  const ids = [...new Set(column(table, "path"))].sort((a, b) => a - b);
  const wanted =
    style?.path !== undefined ? ids.filter((i) => i === style.path) : ids;
  if (style?.path !== undefined && !wanted.length) {
    throw new Error(
      `trajectory input has no path ${style.path} (paths: ${ids.join(", ")})`,
    );
  }

  const first = table.rows.filter((r) => r.path === ids[0]);
  const envelope: Envelope = {
    x: first.map((r) => r.t),
    lo: first.map((r) => r.W_lower),
    hi: first.map((r) => r.W_upper),
    fill: "#e8f0fe",
    stroke: "#7a93c4",
  };
  chart.envelopes = [envelope];

  const markers: Marker[] = [];
  chart.series = wanted.map((id, i) => {
    const rows = table.rows.filter((r) => r.path === id);
    const hit = rows.find((r) => r.boundary_flag !== 0);
    if (hit) {
      markers.push({
        x: hit.t,
        y: hit.Y0 - hit.Y1,
        color: PALETTE[(i + 1) % PALETTE.length],
      });
    }
    return {
      label: `path ${id}`,
      x: rows.map((r) => r.t),
      y: rows.map((r) => r.Y0 - r.Y1),
      color: PALETTE[(i + 1) % PALETTE.length],
      strokeWidth: 1.1,
    };
  });
  chart.markers = markers;
  chart.legend = wanted.length <= 6;
  return chart;
}

const BUILDERS: Record<
  FigureSpec["kind"],
  (table: Table, style?: FigureStyle) => Chart
> = {
  comparison: comparisonChart,
  "value-vs-prior": valueChart,
  "argmax-vs-prior": argmaxChart,
  slice: sliceChart,
  trajectory: trajectoryChart,
};

/** Load the figure's CSV and build its chart data (no rendering). */
export function buildChart(spec: FigureSpec, table?: Table): Chart {
  const data = table ?? loadTable(spec.input_csv, REQUIRED_COLUMNS[spec.kind]);
  return BUILDERS[spec.kind](data, spec.style);
}

export function outputName(spec: FigureSpec): string {
  return spec.output ?? `${spec.kind}.svg`;
}

/** CSV path -> SVG text, the whole figure pipeline for one spec. */
export function renderFigure(spec: FigureSpec): string {
  return renderChart(buildChart(spec));
}
