import { scaleLinear } from "d3";

/**
 * Deterministic SVG line charts. Every coordinate passes through one
 * fixed-precision formatter and nothing here reads the clock or any
 * RNG, so identical chart data always renders to identical bytes.
 */

export interface Series {
  label: string;
  x: number[];
  y: number[];
  color: string;
  dash?: string;
  strokeWidth?: number;
}

export interface Marker {
  x: number;
  y: number;
  color: string;
  label?: string;
}

/** Shaded corridor between two curves sharing one x grid. */
export interface Envelope {
  x: number[];
  lo: number[];
  hi: number[];
  fill: string;
  stroke: string;
}

export interface Chart {
  title?: string;
  xLabel?: string;
  yLabel?: string;
  width: number;
  height: number;
  xLimits?: [number, number];
  yLimits?: [number, number];
  envelopes: Envelope[];
  series: Series[];
  markers: Marker[];
  legend: boolean;
}

export const PALETTE = [
  "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

const MARGIN = { top: 36, right: 18, bottom: 46, left: 60 };

function fmt(v: number): string {
  const s = v.toFixed(2);
  return s === "-0.00" ? "0.00" : s;
}

function fmtTick(v: number): string {
  // Axis labels: trim trailing zeros without scientific surprises.
  const s = v.toPrecision(6);
  return String(Number(s));
}

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;");
}

function extent(values: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  return [lo, hi];
}

function dataExtent(chart: Chart, axis: "x" | "y"): [number, number] {
  const pools: number[] = [];
  for (const s of chart.series) pools.push(...(axis === "x" ? s.x : s.y));
  for (const e of chart.envelopes) {
    pools.push(...(axis === "x" ? e.x : [...e.lo, ...e.hi]));
  }
  for (const m of chart.markers) pools.push(axis === "x" ? m.x : m.y);
  if (!pools.length) return [0, 1];
  let [lo, hi] = extent(pools);
  if (lo === hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  return [lo, hi];
}

function pathOf(
  xs: number[],
  ys: number[],
  sx: (v: number) => number,
  sy: (v: number) => number,
): string {
  return xs
    .map((x, i) => `${i ? "L" : "M"}${fmt(sx(x))},${fmt(sy(ys[i]))}`)
    .join("");
}

export function renderChart(chart: Chart): string {
  const { width, height } = chart;
  const innerW = width - MARGIN.left - MARGIN.right;
  const innerH = height - MARGIN.top - MARGIN.bottom;

  const sxScale = scaleLinear()
    .domain(chart.xLimits ?? dataExtent(chart, "x"))
    .range([0, innerW]);
  const syScale = scaleLinear()
    .domain(chart.yLimits ?? dataExtent(chart, "y"))
    .range([innerH, 0]);
  if (!chart.xLimits) sxScale.nice();
  if (!chart.yLimits) syScale.nice();
  const sx = (v: number) => sxScale(v);
  const sy = (v: number) => syScale(v);

  const out: string[] = [];
  out.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" ` +
      `height="${height}" viewBox="0 0 ${width} ${height}" ` +
      `font-family="Helvetica, Arial, sans-serif">`,
  );
  out.push(`<rect width="${width}" height="${height}" fill="#ffffff"/>`);
  out.push(`<g transform="translate(${MARGIN.left},${MARGIN.top})">`);

  // grid + ticks
  const xTicks = sxScale.ticks(6);
  const yTicks = syScale.ticks(6);
  for (const t of yTicks) {
    const y = fmt(sy(t));
    out.push(
      `<line x1="0" y1="${y}" x2="${innerW}" y2="${y}" ` +
        `stroke="#dddddd" stroke-width="0.5"/>`,
    );
    out.push(
      `<text x="-8" y="${y}" dy="0.32em" text-anchor="end" ` +
        `font-size="11" fill="#444444">${esc(fmtTick(t))}</text>`,
    );
  }
  for (const t of xTicks) {
    const x = fmt(sx(t));
    out.push(
      `<line x1="${x}" y1="0" x2="${x}" y2="${innerH}" ` +
        `stroke="#dddddd" stroke-width="0.5"/>`,
    );
    out.push(
      `<text x="${x}" y="${innerH + 18}" text-anchor="middle" ` +
        `font-size="11" fill="#444444">${esc(fmtTick(t))}</text>`,
    );
  }
  out.push(
    `<rect x="0" y="0" width="${innerW}" height="${innerH}" ` +
      `fill="none" stroke="#222222" stroke-width="1"/>`,
  );

  for (const env of chart.envelopes) {
    const upper = pathOf(env.x, env.hi, sx, sy);
    const backX = [...env.x].reverse();
    const backLo = [...env.lo].reverse();
    const lower = backX
      .map((x, i) => `L${fmt(sx(x))},${fmt(sy(backLo[i]))}`)
      .join("");
    out.push(`<path d="${upper}${lower}Z" fill="${env.fill}" stroke="none"/>`);
    out.push(
      `<path d="${pathOf(env.x, env.hi, sx, sy)}" fill="none" ` +
        `stroke="${env.stroke}" stroke-width="1" stroke-dasharray="4 3"/>`,
    );
    out.push(
      `<path d="${pathOf(env.x, env.lo, sx, sy)}" fill="none" ` +
        `stroke="${env.stroke}" stroke-width="1" stroke-dasharray="4 3"/>`,
    );
  }

  for (const s of chart.series) {
    const dash = s.dash ? ` stroke-dasharray="${s.dash}"` : "";
    out.push(
      `<path d="${pathOf(s.x, s.y, sx, sy)}" fill="none" ` +
        `stroke="${s.color}" stroke-width="${s.strokeWidth ?? 1.6}"${dash}/>`,
    );
  }

  for (const m of chart.markers) {
    out.push(
      `<circle cx="${fmt(sx(m.x))}" cy="${fmt(sy(m.y))}" r="3.5" ` +
        `fill="${m.color}" stroke="#ffffff" stroke-width="1"/>`,
    );
  }

  if (chart.legend && chart.series.length) {
    const lh = 16;
    const lw = 150;
    const lx = innerW - lw - 8;
    out.push(
      `<rect x="${lx}" y="8" width="${lw}" ` +
        `height="${chart.series.length * lh + 10}" fill="#ffffff" ` +
        `fill-opacity="0.85" stroke="#999999" stroke-width="0.5"/>`,
    );
    chart.series.forEach((s, i) => {
      const y = 8 + 12 + i * lh;
      const dash = s.dash ? ` stroke-dasharray="${s.dash}"` : "";
      out.push(
        `<line x1="${lx + 8}" y1="${y - 4}" x2="${lx + 30}" y2="${y - 4}" ` +
          `stroke="${s.color}" stroke-width="2"${dash}/>`,
      );
      out.push(
        `<text x="${lx + 36}" y="${y}" font-size="11" ` +
          `fill="#222222">${esc(s.label)}</text>`,
      );
    });
  }

  if (chart.xLabel) {
    out.push(
      `<text x="${innerW / 2}" y="${innerH + 38}" text-anchor="middle" ` +
        `font-size="12" fill="#222222">${esc(chart.xLabel)}</text>`,
    );
  }
  if (chart.yLabel) {
    out.push(
      `<text transform="translate(${-44},${innerH / 2}) rotate(-90)" ` +
        `text-anchor="middle" font-size="12" ` +
        `fill="#222222">${esc(chart.yLabel)}</text>`,
    );
  }
  if (chart.title) {
    out.push(
      `<text x="${innerW / 2}" y="-14" text-anchor="middle" ` +
        `font-size="14" font-weight="bold" ` +
        `fill="#111111">${esc(chart.title)}</text>`,
    );
  }

  out.push("</g>");
  out.push("</svg>");
  return out.join("\n") + "\n";
}
