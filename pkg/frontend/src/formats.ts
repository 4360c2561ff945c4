/**
 * Parsers for the solver's text artifacts.  Every file opens with a
 * `# axirmhd <kind> version=... config_hash=...` header; parse errors
 * name the offending line.
 */

export class FormatError extends Error {
  constructor(message: string, public readonly line?: number) {
    super(line === undefined ? message : `line ${line}: ${message}`);
  }
}

export interface ArtifactMeta {
  kind: string;
  version: string;
  configHash: string;
}

export interface RunLog {
  meta: ArtifactMeta;
  columns: string[];
  steps: number[];
  dt: number[];
  cfl: number[];
  mode: string[];
  residuals: number[][]; // [row][equation]
  residualNames: string[];
}

export interface Snapshot {
  meta: ArtifactMeta;
  columns: string[];
  nr: number;
  nth: number;
  /** column name -> (nr*nth) values in j-major order */
  data: Map<string, Float64Array>;
  rCenters: Float64Array;
  thCenters: Float64Array;
}

export interface Sed {
  meta: ArtifactMeta;
  nu: Float64Array;
  nuLnu: Float64Array;
}

function parseHeader(firstLine: string, path: string): ArtifactMeta {
  const m = firstLine.match(/^#\s*axirmhd\s+(\S+)\s+version=(\S+)\s+config_hash=(\S+)/);
  if (!m) {
    throw new FormatError(`${path}: missing artifact header`, 1);
  }
  return { kind: m[1], version: m[2], configHash: m[3] };
}

export function parseRunLog(text: string, path = "runlog"): RunLog {
  const lines = text.split(/\r?\n/);
  const meta = parseHeader(lines[0] ?? "", path);
  let headerIdx = 1;
  while (headerIdx < lines.length && lines[headerIdx].startsWith("#")) headerIdx++;
  const columns = (lines[headerIdx] ?? "").split(",").map((s) => s.trim());
  if (columns[0] !== "step") {
    throw new FormatError(`expected a 'step,...' column header, got '${lines[headerIdx]}'`, headerIdx + 1);
  }
  const residualNames = columns.filter((c) => c.startsWith("res_"));
  const log: RunLog = {
    meta, columns, steps: [], dt: [], cfl: [], mode: [],
    residuals: [], residualNames,
  };
  for (let i = headerIdx + 1; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line || line.startsWith("#")) continue;
    const parts = line.split(",");
    if (parts.length !== columns.length) {
      throw new FormatError(`expected ${columns.length} fields, got ${parts.length}`, i + 1);
    }
    log.steps.push(parseIntStrict(parts[0], i + 1));
    log.dt.push(parseFloatStrict(parts[2], i + 1));
    log.cfl.push(parseFloatStrict(parts[3], i + 1));
    log.mode.push(parts[4]);
    log.residuals.push(parts.slice(5).map((p) => parseFloatStrict(p, i + 1)));
  }
  if (log.steps.length === 0) throw new FormatError(`${path}: no data rows`);
  return log;
}

export function parseSnapshot(text: string, path = "snapshot"): Snapshot {
  const lines = text.split(/\r?\n/);
  const meta = parseHeader(lines[0] ?? "", path);
  let columns: string[] | null = null;
  const rows: number[][] = [];
  for (let i = 1; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    if (line.startsWith("#")) {
      const body = line.slice(1).trim();
      if (body.startsWith("j ")) columns = body.split(/\s+/);
      continue;
    }
    if (!columns) throw new FormatError("data row before the column header", i + 1);
    const parts = line.split(/\s+/);
    if (parts.length !== columns.length) {
      throw new FormatError(`expected ${columns.length} columns, got ${parts.length}`, i + 1);
    }
    rows.push(parts.map((p) => parseFloatStrict(p, i + 1)));
  }
  if (!columns || rows.length === 0) throw new FormatError(`${path}: empty snapshot`);
  const jCol = columns.indexOf("j");
  const kCol = columns.indexOf("k");
  const nr = Math.max(...rows.map((r) => r[jCol])) + 1;
  const nth = Math.max(...rows.map((r) => r[kCol])) + 1;
  if (rows.length !== nr * nth) {
    throw new FormatError(`snapshot has ${rows.length} rows, expected ${nr}x${nth}`);
  }
  const data = new Map<string, Float64Array>();
  for (const name of columns) data.set(name, new Float64Array(nr * nth));
  for (const row of rows) {
    const idx = row[jCol] * nth + row[kCol];
    columns.forEach((name, c) => {
      data.get(name)![idx] = row[c];
    });
  }
  const rCenters = new Float64Array(nr);
  const thCenters = new Float64Array(nth);
  const rArr = data.get("r")!;
  const thArr = data.get("theta")!;
  for (let j = 0; j < nr; j++) rCenters[j] = rArr[j * nth];
  for (let k = 0; k < nth; k++) thCenters[k] = thArr[k];
  return { meta, columns, nr, nth, data, rCenters, thCenters };
}

export function parseSed(text: string, path = "sed"): Sed {
  const lines = text.split(/\r?\n/);
  const meta = parseHeader(lines[0] ?? "", path);
  const nu: number[] = [];
  const lum: number[] = [];
  for (let i = 1; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line || line.startsWith("#")) continue;
    const parts = line.split(/\s+/);
    if (parts.length !== 2) throw new FormatError(`expected two columns, got ${parts.length}`, i + 1);
    nu.push(parseFloatStrict(parts[0], i + 1));
    lum.push(parseFloatStrict(parts[1], i + 1));
  }
  if (nu.length === 0) throw new FormatError(`${path}: no spectrum rows`);
  return { meta, nu: Float64Array.from(nu), nuLnu: Float64Array.from(lum) };
}

function parseFloatStrict(s: string, line: number): number {
  const v = Number(s);
  if (!Number.isFinite(v) && s.trim() !== "inf" && s.trim() !== "-inf") {
    if (Number.isNaN(v)) throw new FormatError(`not a number: '${s}'`, line);
  }
  return v;
}

function parseIntStrict(s: string, line: number): number {
  const v = Number(s);
  if (!Number.isInteger(v)) throw new FormatError(`not an integer: '${s}'`, line);
  return v;
}
