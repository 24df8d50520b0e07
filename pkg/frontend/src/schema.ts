import { z } from "zod";

/** Figure kinds and the exact CSV schema each one consumes. */
export const KINDS = [
  "value-vs-prior",
  "argmax-vs-prior",
  "slice",
  "trajectory",
  "comparison",
] as const;

export type Kind = (typeof KINDS)[number];

/**
 * Required column sequences, matching the emitting subcommand byte for
 * byte. Order is part of the contract: the producer never reorders
 * columns within a major version, so a reordered file signals a stale
 * or foreign input.
 */
export const REQUIRED_COLUMNS: Record<Kind, readonly string[]> = {
  comparison: ["p0", "v_c", "v_s", "v_uc"],
  "value-vs-prior": ["p0", "v_c", "y0_c", "y1_c", "v_uc", "y0_uc", "y1_uc"],
  "argmax-vs-prior": ["p0", "v_c", "y0_c", "y1_c", "v_uc", "y0_uc", "y1_uc"],
  slice: ["t", "s", "p", "y", "w", "z0_star", "z1_star", "boundary_flag"],
  trajectory: [
    "path", "t", "X", "p", "Y0", "Y1",
    "W_lower", "W_upper", "z0", "z1", "boundary_flag",
  ],
};

const styleSchema = z
  .object({
    title: z.string().optional(),
    width: z.number().int().positive().optional(),
    height: z.number().int().positive().optional(),
    x_label: z.string().optional(),
    y_label: z.string().optional(),
    x_limits: z.tuple([z.number(), z.number()]).optional(),
    y_limits: z.tuple([z.number(), z.number()]).optional(),
    /** slice: pick the stored time closest to this (default 0). */
    time: z.number().optional(),
    /** slice: pick the stored belief closest to this (default 0.5). */
    belief: z.number().optional(),
    /** trajectory: render only this path id. */
    path: z.number().int().nonnegative().optional(),
  })
  .strict();

export const figureSchema = z
  .object({
    kind: z.enum(KINDS),
    input_csv: z.string().min(1),
    /** Output file name (inside --out); defaults to `${kind}.svg`. */
    output: z.string().min(1).optional(),
    style: styleSchema.optional(),
  })
  .strict();

export type FigureSpec = z.infer<typeof figureSchema>;
export type FigureStyle = NonNullable<FigureSpec["style"]>;

/** A spec file holds one figure or a list of them. */
export const specFileSchema = z.union([
  figureSchema,
  z.array(figureSchema).nonempty(),
]);

export function parseSpecFile(text: string, source: string): FigureSpec[] {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (err) {
    throw new Error(`${source} is not valid JSON: ${(err as Error).message}`);
  }
  // Validate against the branch the document's shape selects, not the
  // union: union errors collapse to an unlocated "invalid input".
  const schema = Array.isArray(doc)
    ? z.array(figureSchema).nonempty()
    : figureSchema;
  const parsed = schema.safeParse(doc);
  if (!parsed.success) {
    const issues = parsed.error.issues
      .map((i) => `${i.path.join(".") || "<root>"}: ${i.message}`)
      .join("; ");
    throw new Error(`${source} is not a figure spec: ${issues}`);
  }
  return Array.isArray(parsed.data) ? parsed.data : [parsed.data];
}
