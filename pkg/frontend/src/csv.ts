import { readFileSync } from "node:fs";
import Papa from "papaparse";

/** The input's header differs from the producing subcommand's schema. */
export class SchemaMismatchError extends Error {
  readonly missing: string[];
  readonly unexpected: string[];

  constructor(path: string, expected: readonly string[], got: string[]) {
    const missing = expected.filter((c) => !got.includes(c));
    const unexpected = got.filter((c) => !expected.includes(c));
    const parts = [`${path}: column mismatch`];
    if (missing.length) parts.push(`missing [${missing.join(", ")}]`);
    if (unexpected.length) parts.push(`unexpected [${unexpected.join(", ")}]`);
    if (!missing.length && !unexpected.length) {
      parts.push(
        `columns out of order (got [${got.join(", ")}], ` +
          `expected [${expected.join(", ")}])`,
      );
    }
    super(parts.join("; "));
    this.name = "SchemaMismatchError";
    this.missing = missing;
    this.unexpected = unexpected;
  }
}

export class EmptyCsvError extends Error {
  constructor(path: string) {
    super(`${path}: no data rows`);
    this.name = "EmptyCsvError";
  }
}

export interface Table {
  columns: string[];
  rows: Record<string, number>[];
}

/**
 * Read a producer CSV and check its header against the expected column
 * sequence (order included). Every cell must parse as a finite number.
 */
export function loadTable(path: string, expected: readonly string[]): Table {
  const text = readFileSync(path, "utf8");
  const parsed = Papa.parse<string[]>(text.trim(), { skipEmptyLines: true });
  if (parsed.errors.length) {
    throw new Error(`${path}: ${parsed.errors[0].message}`);
  }
  const [header, ...body] = parsed.data;
  if (!header || header.length === 0) {
    throw new EmptyCsvError(path);
  }
  const sameOrder =
    header.length === expected.length &&
    header.every((c, i) => c === expected[i]);
  if (!sameOrder) {
    throw new SchemaMismatchError(path, expected, header);
  }
  if (body.length === 0) {
    throw new EmptyCsvError(path);
  }
  const rows = body.map((cells, rowIdx) => {
    const row: Record<string, number> = {};
    header.forEach((col, i) => {
      const v = Number(cells[i]);
      if (cells[i] === undefined || cells[i] === "" || !Number.isFinite(v)) {
        throw new Error(
          `${path}: row ${rowIdx + 2}, column ${col}: ` +
            `${JSON.stringify(cells[i])} is not a finite number`,
        );
      }
      row[col] = v;
    });
    return row;
  });
  return { columns: [...header], rows };
}

export function column(table: Table, name: string): number[] {
  return table.rows.map((r) => r[name]);
}
