/**
 * axirmhd-plot <kind> <input> -o <output.svg> [--field NAME] [--stride N]
 *
 * kinds: residual (run log CSV), fieldmap / vectors (snapshot), sed.
 * Exit codes: 0 success, 1 parse/render failure (message names the line).
 */

import { parseArgs } from "node:util";

import { FormatError } from "./formats.js";
import { PlotKind, render } from "./job.js";

const KINDS = ["residual", "fieldmap", "vectors", "sed"] as const;

export function run(argv: string[]): number {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      allowPositionals: true,
      options: {
        output: { type: "string", short: "o" },
        field: { type: "string", default: "rho" },
        stride: { type: "string", default: "2" },
        linear: { type: "boolean", default: false },
      },
    });
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
  const [kind, input] = parsed.positionals;
  const out = parsed.values.output;
  if (!kind || !input || !out || !(KINDS as readonly string[]).includes(kind)) {
    console.error(`usage: axirmhd-plot <${KINDS.join("|")}> <input> -o <output.svg>`);
    return 1;
  }
  try {
    render({
      kind: kind as PlotKind,
      input,
      output: out,
      field: parsed.values.field as string,
      stride: Number(parsed.values.stride),
      linearColor: parsed.values.linear as boolean,
    });
  } catch (err) {
    if (err instanceof FormatError || err instanceof Error) {
      console.error(`error: ${input}: ${err.message}`);
      return 1;
    }
    throw err;
  }
  return 0;
}

if (process.argv[1] && /cli\.[jt]s$/.test(process.argv[1])) {
  process.exit(run(process.argv.slice(2)));
}
