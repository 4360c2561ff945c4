/** A plot job: artifact in, SVG file out. */

import { readFileSync, writeFileSync } from "node:fs";

import { parseRunLog, parseSed, parseSnapshot } from "./formats.js";
import { renderFieldMap, renderResidual, renderSed, renderVectors } from "./plots.js";

export type PlotKind = "residual" | "fieldmap" | "vectors" | "sed";

export interface PlotJob {
  kind: PlotKind;
  input: string;
  output: string;
  /** axis/content options: field name, vector stride, linear color scale */
  field?: string;
  stride?: number;
  linearColor?: boolean;
}

/** Render one job to its output path; returns the SVG that was written. */
export function render(job: PlotJob): string {
  const text = readFileSync(job.input, "utf8");
  let svg: string;
  switch (job.kind) {
    case "residual":
      svg = renderResidual(parseRunLog(text, job.input));
      break;
    case "fieldmap":
      svg = renderFieldMap(parseSnapshot(text, job.input), job.field ?? "rho",
        !(job.linearColor ?? false));
      break;
    case "vectors":
      svg = renderVectors(parseSnapshot(text, job.input), job.stride ?? 2);
      break;
    case "sed":
      svg = renderSed(parseSed(text, job.input));
      break;
    default:
      throw new Error(`unknown plot kind '${(job as PlotJob).kind}'`);
  }
  writeFileSync(job.output, svg);
  return svg;
}
