#!/usr/bin/env node
import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { dirname, isAbsolute, join, resolve } from "node:path";
import { pathToFileURL } from "node:url";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { outputName, renderFigure } from "./figures.js";
import { parseSpecFile } from "./schema.js";

/**
 * Render every figure named by a spec file into the output directory.
 * Relative input_csv paths resolve against the spec file's directory,
 * so a spec can sit next to the CSVs it plots.
 */
export function renderSpecFile(specPath: string, outDir: string): string[] {
  const figures = parseSpecFile(readFileSync(specPath, "utf8"), specPath);
  mkdirSync(outDir, { recursive: true });
  const base = dirname(resolve(specPath));
  const written: string[] = [];
  for (const fig of figures) {
    const resolved = {
      ...fig,
      input_csv: isAbsolute(fig.input_csv)
        ? fig.input_csv
        : join(base, fig.input_csv),
    };
    const svg = renderFigure(resolved);
    const target = join(outDir, outputName(fig));
    writeFileSync(target, svg);
    written.push(target);
  }
  return written;
}

export async function main(argv: string[]): Promise<void> {
  await yargs(argv)
    .scriptName("figs")
    .command(
      "render",
      "Render figures from solver CSVs",
      (y) =>
        y
          .option("spec", {
            type: "string",
            demandOption: true,
            describe: "Figure spec JSON (one figure or a list)",
          })
          .option("out", {
            type: "string",
            demandOption: true,
            describe: "Directory for the rendered SVGs",
          }),
      (args) => {
        const written = renderSpecFile(args.spec, args.out);
        for (const path of written) console.log(`wrote ${path}`);
      },
    )
    .demandCommand(1)
    .strict()
    .fail((msg, err) => {
      console.error(err ? err.message : msg);
      process.exit(1);
    })
    .parseAsync();
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === pathToFileURL(process.argv[1]).href;
if (invokedDirectly) {
  void main(hideBin(process.argv));
}
