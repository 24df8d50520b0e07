import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { renderSpecFile } from "../src/cli.js";
import { buildChart, renderFigure } from "../src/figures.js";
import { FigureSpec } from "../src/schema.js";
import { Series } from "../src/svg.js";

const dir = mkdtempSync(join(tmpdir(), "figs-"));

function writeCsv(name: string, lines: string[]): string {
  const path = join(dir, name);
  writeFileSync(path, lines.join("\n") + "\n");
  return path;
}

// Dominated-example shape: all three curves rise with the prior and the
// relaxed problem dominates throughout.
const comparisonCsv = writeCsv("compare.csv", [
  "p0,v_c,v_s,v_uc",
  ...[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9].map((p) => {
    const vc = 0.3 + 0.4 * p;
    const vs = 0.36 + 0.42 * p;
    const vu = 0.45 + 0.45 * p;
    return `${p},${vc},${vs},${vu}`;
  }),
]);

// Nondominated shape: screening's edge over one contract vanishes at
// extreme priors.
const comparisonNdCsv = writeCsv("compare_nd.csv", [
  "p0,v_c,v_s,v_uc",
  ...[0.05, 0.25, 0.5, 0.75, 0.95].map((p) => {
    const vc = 0.5 + 0.9 * p;
    const vs = vc + 0.3 * p * (1 - p);
    const vu = vs + 0.05;
    return `${p},${vc},${vs},${vu}`;
  }),
]);

const valuesCsv = writeCsv("values.csv", [
  "p0,v_c,y0_c,y1_c,v_uc,y0_uc,y1_uc",
  ...[0.2, 0.4, 0.6, 0.8].map((p) => {
    const y0c = 0.9 - 0.5 * p; // conditional y0 falls with the prior
    return `${p},${0.3 + 0.4 * p},${y0c},0,${0.45 + 0.45 * p},${0.5 - 0.2 * p},${0.1 * p}`;
  }),
]);

// Two exported paths on a collapsing band; path 0 reaches the upper
// wall at t=0.6 and rides it to the horizon.
const trajectoryCsv = writeCsv("trajectory.csv", [
  "path,t,X,p,Y0,Y1,W_lower,W_upper,z0,z1,boundary_flag",
  "0,0,0,0.5,0.3,0.1,0,1,1,0.5,0",
  "0,0.2,0.1,0.52,0.5,0.1,0,0.8,1,0.5,0",
  "0,0.4,0.15,0.55,0.62,0.12,0,0.6,1,0.5,0",
  "0,0.6,0.2,0.55,0.52,0.12,0,0.4,0.7,0.7,2",
  "0,0.8,0.22,0.55,0.32,0.12,0,0.2,0.7,0.7,2",
  "0,1,0.25,0.55,0.22,0.22,0,0,0.7,0.7,2",
  "1,0,0.1,0.5,0.2,0.15,0,1,1,0.5,0",
  "1,0.2,0.12,0.48,0.25,0.15,0,0.8,1,0.5,0",
  "1,0.4,0.18,0.47,0.3,0.16,0,0.6,1,0.5,0",
  "1,0.6,0.2,0.47,0.3,0.18,0,0.4,1,0.5,0",
  "1,0.8,0.24,0.47,0.25,0.2,0,0.2,1,0.5,0",
  "1,1,0.3,0.47,0.21,0.21,0,0,0.4,0.4,1",
]);

const sliceCsv = writeCsv("field.csv", [
  "t,s,p,y,w,z0_star,z1_star,boundary_flag",
  // t=0, p=0.25
  "0,0,0.25,0,0.1,0.3,0.2,1",
  "0,0.5,0.25,0.9,0.5,0.6,0.4,0",
  "0,1,0.25,1.8,0.2,0.9,0.7,2",
  // t=0, p=0.5
  "0,0,0.5,0,0.15,0.3,0.2,1",
  "0,0.5,0.5,0.9,0.55,0.6,0.4,0",
  "0,1,0.5,1.8,0.25,0.9,0.7,2",
  // t=0.5, p=0.5
  "0.5,0,0.5,0,0.12,0.3,0.2,1",
  "0.5,0.5,0.5,0.7,0.4,0.6,0.4,0",
  "0.5,1,0.5,1.4,0.18,0.9,0.7,2",
]);

function seriesByLabel(series: Series[], label: string): Series {
  const found = series.find((s) => s.label === label);
  expect(found, `series ${label}`).toBeDefined();
  return found!;
}

function isNondecreasing(values: number[]): boolean {
  return values.every((v, i) => i === 0 || v >= values[i - 1] - 1e-12);
}

describe("comparison figure", () => {
  const chart = buildChart({ kind: "comparison", input_csv: comparisonCsv });

  it("plots three monotone curves", () => {
    expect(chart.series.map((s) => s.label)).toEqual([
      "conditional",
      "screening",
      "unconditional",
    ]);
    for (const s of chart.series) {
      expect(isNondecreasing(s.y)).toBe(true);
    }
  });

  it("keeps the unconditional value on top", () => {
    const vs = seriesByLabel(chart.series, "screening");
    const vc = seriesByLabel(chart.series, "conditional");
    const vu = seriesByLabel(chart.series, "unconditional");
    vu.y.forEach((v, i) => {
      expect(v).toBeGreaterThanOrEqual(vs.y[i]);
      expect(v).toBeGreaterThanOrEqual(vc.y[i]);
    });
  });

  it("shows the screening gap closing at extreme priors", () => {
    const nd = buildChart({ kind: "comparison", input_csv: comparisonNdCsv });
    const gap = (i: number) =>
      Math.abs(
        seriesByLabel(nd.series, "screening").y[i] -
          seriesByLabel(nd.series, "conditional").y[i],
      );
    const mid = gap(2);
    expect(gap(0)).toBeLessThanOrEqual(mid);
    expect(gap(nd.series[0].x.length - 1)).toBeLessThanOrEqual(mid);
  });
});

describe("argmax figure", () => {
  it("renders the binding reservation as a flat line", () => {
    const chart = buildChart({
      kind: "argmax-vs-prior",
      input_csv: valuesCsv,
    });
    const y1c = seriesByLabel(chart.series, "y1 (conditional)");
    expect(new Set(y1c.y)).toEqual(new Set([0]));
    const y0c = seriesByLabel(chart.series, "y0 (conditional)");
    expect(isNondecreasing([...y0c.y].reverse())).toBe(true);
  });
});

describe("trajectory figure", () => {
  const chart = buildChart({ kind: "trajectory", input_csv: trajectoryCsv });

  it("draws the band envelope and keeps every gap inside it", () => {
    expect(chart.envelopes).toHaveLength(1);
    const env = chart.envelopes[0];
    expect(env.hi[0]).toBe(1);
    expect(env.lo.every((v) => v === 0)).toBe(true);
    for (const s of chart.series) {
      s.y.forEach((gap, i) => {
        expect(gap).toBeGreaterThanOrEqual(env.lo[i] - 1e-12);
        expect(gap).toBeLessThanOrEqual(env.hi[i] + 1e-12);
      });
    }
  });

  it("marks the first wall contact of each path", () => {
    expect(chart.markers).toHaveLength(2);
    const [hit0, hit1] = chart.markers;
    expect(hit0.x).toBe(0.6); // path 0 reaches the upper wall here
    expect(hit0.y).toBeCloseTo(0.4, 12);
    expect(hit1.x).toBe(1); // path 1 only hits at the collapse
  });

  it("can single out one path", () => {
    const solo = buildChart({
      kind: "trajectory",
      input_csv: trajectoryCsv,
      style: { path: 1 },
    });
    expect(solo.series).toHaveLength(1);
    expect(solo.series[0].label).toBe("path 1");
    expect(() =>
      buildChart({
        kind: "trajectory",
        input_csv: trajectoryCsv,
        style: { path: 7 },
      }),
    ).toThrow(/no path 7/);
  });
});

describe("slice figure", () => {
  it("picks the nearest stored time and belief", () => {
    const chart = buildChart({
      kind: "slice",
      input_csv: sliceCsv,
      style: { time: 0.49, belief: 0.6 },
    });
    expect(chart.title).toBe("Value slice at t=0.5, p=0.5");
    expect(chart.series[0].x).toEqual([0, 0.7, 1.4]);
    expect(chart.series[0].y).toEqual([0.12, 0.4, 0.18]);
    expect(chart.markers).toHaveLength(2); // both wall rows flagged
  });
});

describe("rendering", () => {
  it("produces self-contained SVG with no timestamps", () => {
    const svg = renderFigure({ kind: "comparison", input_csv: comparisonCsv });
    expect(svg.startsWith("<svg ")).toBe(true);
    expect(svg.trimEnd().endsWith("</svg>")).toBe(true);
    expect(svg).toContain('font-family="Helvetica, Arial, sans-serif"');
    expect(svg).not.toMatch(/\d{4}-\d{2}-\d{2}/);
    expect(svg).not.toMatch(/date|time(stamp)?/i);
  });

  it("re-renders byte-identically", () => {
    const spec: FigureSpec = { kind: "trajectory", input_csv: trajectoryCsv };
    expect(renderFigure(spec)).toBe(renderFigure(spec));
  });
});

describe("spec-file driver", () => {
  it("renders every figure in a spec file into the output directory", () => {
    const specPath = join(dir, "figures.json");
    writeFileSync(
      specPath,
      JSON.stringify([
        { kind: "comparison", input_csv: "compare.csv" },
        {
          kind: "trajectory",
          input_csv: "trajectory.csv",
          output: "paths.svg",
        },
      ]),
    );
    const out = join(dir, "out");
    const written = renderSpecFile(specPath, out);
    expect(written).toEqual([
      join(out, "comparison.svg"),
      join(out, "paths.svg"),
    ]);
    const first = readFileSync(written[0], "utf8");
    expect(first).toContain("</svg>");
    // byte-stable across re-renders of identical inputs
    renderSpecFile(specPath, out);
    expect(readFileSync(written[0], "utf8")).toBe(first);
  });

  it("fails on an empty-row CSV", () => {
    const emptyCsv = join(dir, "empty.csv");
    writeFileSync(emptyCsv, "p0,v_c,v_s,v_uc\n");
    const specPath = join(dir, "bad.json");
    writeFileSync(
      specPath,
      JSON.stringify({ kind: "comparison", input_csv: emptyCsv }),
    );
    expect(() => renderSpecFile(specPath, join(dir, "out2"))).toThrow(
      /no data rows/,
    );
  });

  it("rejects a malformed spec file with located issues", () => {
    const specPath = join(dir, "malformed.json");
    writeFileSync(
      specPath,
      JSON.stringify({ kind: "pie-chart", input_csv: "compare.csv" }),
    );
    expect(() => renderSpecFile(specPath, join(dir, "out3"))).toThrow(
      /kind/,
    );
  });
});
