/** Minimal deterministic SVG document builder (fixed precision, no state). */

export function fmt(x: number): string {
  if (!Number.isFinite(x)) return "0";
  const s = x.toFixed(2);
  return s === "-0.00" ? "0.00" : s;
}

export class SvgDoc {
  private parts: string[] = [];

  constructor(readonly width: number, readonly height: number) {}

  add(tag: string, attrs: Record<string, string | number>, text?: string): void {
    const body = Object.entries(attrs)
      .map(([k, v]) => `${k}="${typeof v === "number" ? fmt(v) : v}"`)
      .join(" ");
    if (text === undefined) {
      this.parts.push(`<${tag} ${body}/>`);
    } else {
      this.parts.push(`<${tag} ${body}>${escapeText(text)}</${tag}>`);
    }
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke = "#444", width = 1): void {
    this.add("line", { x1, y1, x2, y2, stroke, "stroke-width": width });
  }

  polyline(points: Array<[number, number]>, stroke: string, width = 1.5): void {
    const pts = points.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ");
    this.add("polyline", { points: pts, fill: "none", stroke, "stroke-width": width });
  }

  polygon(points: Array<[number, number]>, fill: string): void {
    const pts = points.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ");
    this.add("polygon", { points: pts, fill, stroke: "none" });
  }

  text(x: number, y: number, s: string, size = 11, anchor = "start"): void {
    this.add("text", {
      x, y, "font-size": size, "font-family": "monospace", "text-anchor": anchor, fill: "#222",
    }, s);
  }

  render(): string {
    return [
      `<svg xmlns="http://www.w3.org/2000/svg" width="${this.width}" height="${this.height}" viewBox="0 0 ${this.width} ${this.height}">`,
      `<rect x="0" y="0" width="${this.width}" height="${this.height}" fill="#ffffff"/>`,
      ...this.parts,
      "</svg>",
    ].join("\n");
  }
}

function escapeText(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export interface Scale {
  (v: number): number;
  ticks: number[];
  label(v: number): string;
}

export function linearScale(lo: number, hi: number, outLo: number, outHi: number): Scale {
  const span = hi - lo || 1;
  const fn = ((v: number) => outLo + ((v - lo) / span) * (outHi - outLo)) as Scale;
  const step = niceStep(span / 5);
  const ticks: number[] = [];
  for (let t = Math.ceil(lo / step) * step; t <= hi + 1e-12 * Math.abs(span); t += step) ticks.push(t);
  fn.ticks = ticks;
  fn.label = (v) => trimNumber(v);
  return fn;
}

export function logScale(lo: number, hi: number, outLo: number, outHi: number): Scale {
  const llo = Math.log10(Math.max(lo, Number.MIN_VALUE));
  const lhi = Math.log10(Math.max(hi, lo * 10 || 1));
  const span = lhi - llo || 1;
  const fn = ((v: number) => outLo + ((Math.log10(Math.max(v, Number.MIN_VALUE)) - llo) / span) * (outHi - outLo)) as Scale;
  const ticks: number[] = [];
  const stride = Math.max(1, Math.round(span / 6));
  for (let d = Math.ceil(llo); d <= Math.floor(lhi); d += stride) ticks.push(Math.pow(10, d));
  fn.ticks = ticks;
  fn.label = (v) => `1e${Math.round(Math.log10(v))}`;
  return fn;
}

function niceStep(raw: number): number {
  const mag = Math.pow(10, Math.floor(Math.log10(Math.abs(raw) || 1)));
  const n = raw / mag;
  if (n < 1.5) return mag;
  if (n < 3.5) return 2 * mag;
  if (n < 7.5) return 5 * mag;
  return 10 * mag;
}

function trimNumber(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-2) return v.toExponential(0);
  return String(Number(v.toPrecision(4)));
}

/** Blue -> green -> red colormap over [0, 1]; deterministic. */
export function heat(t: number): string {
  const x = Math.min(1, Math.max(0, t));
  const r = Math.round(255 * Math.min(1, Math.max(0, 2 * x - 0.6)));
  const g = Math.round(255 * Math.min(1, Math.max(0, 1.6 - Math.abs(2 * x - 1) * 1.8)));
  const b = Math.round(255 * Math.min(1, Math.max(0, 1.2 - 2.2 * x)));
  return `rgb(${r},${g},${b})`;
}
