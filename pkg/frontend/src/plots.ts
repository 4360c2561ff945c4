/**
 * The four plot kinds over the documented artifacts: residual histories
 * (log y), meridional cell maps, velocity-vector maps, and log-log
 * spectra.  Pure consumers: artifact in, SVG string out, byte-identical
 * for identical inputs.
 */

import { RunLog, Sed, Snapshot } from "./formats.js";
import { SvgDoc, heat, linearScale, logScale } from "./svg.js";

const W = 720;
const H = 480;
const MARGIN = { l: 70, r: 20, t: 36, b: 46 };

const SERIES_COLORS = ["#c0392b", "#2471a3", "#1e8449", "#8e44ad",
  "#b7950b", "#148f77", "#a04000", "#5d6d7e", "#884ea0", "#2e4053"];

function frame(doc: SvgDoc, title: string): void {
  doc.text(MARGIN.l, 20, title, 13);
  doc.line(MARGIN.l, H - MARGIN.b, W - MARGIN.r, H - MARGIN.b);
  doc.line(MARGIN.l, MARGIN.t, MARGIN.l, H - MARGIN.b);
}

export function renderResidual(log: RunLog): string {
  const doc = new SvgDoc(W, H);
  frame(doc, `residual history [${log.meta.configHash}]`);
  const xs = linearScale(log.steps[0], log.steps[log.steps.length - 1] || 1,
    MARGIN.l, W - MARGIN.r);
  let lo = Infinity;
  let hi = 0;
  for (const row of log.residuals) {
    for (const v of row) {
      if (v > 0) {
        lo = Math.min(lo, v);
        hi = Math.max(hi, v);
      }
    }
  }
  if (!Number.isFinite(lo)) { lo = 1e-16; hi = 1; }
  const ys = logScale(lo, hi, H - MARGIN.b, MARGIN.t);
  for (const t of ys.ticks) {
    doc.line(MARGIN.l - 4, ys(t), MARGIN.l, ys(t));
    doc.text(MARGIN.l - 8, ys(t) + 4, ys.label(t), 10, "end");
  }
  for (const t of xs.ticks) {
    doc.line(xs(t), H - MARGIN.b, xs(t), H - MARGIN.b + 4);
    doc.text(xs(t), H - MARGIN.b + 16, xs.label(t), 10, "middle");
  }
  doc.text(W / 2, H - 10, "iteration", 11, "middle");
  log.residualNames.forEach((name, c) => {
    const pts: Array<[number, number]> = [];
    log.steps.forEach((s, i) => {
      const v = log.residuals[i][c];
      if (v > 0) pts.push([xs(s), ys(v)]);
    });
    if (pts.length > 1) doc.polyline(pts, SERIES_COLORS[c % SERIES_COLORS.length]);
    doc.text(W - MARGIN.r - 120, MARGIN.t + 14 * (c + 1), name.replace("res_", ""), 10);
    doc.line(W - MARGIN.r - 150, MARGIN.t + 14 * (c + 1) - 4,
      W - MARGIN.r - 128, MARGIN.t + 14 * (c + 1) - 4,
      SERIES_COLORS[c % SERIES_COLORS.length], 2);
  });
  // CFL on a faint secondary curve
  const cmax = Math.max(...log.cfl);
  const cmin = Math.min(...log.cfl.filter((c) => c > 0), cmax);
  if (cmax > 0) {
    const cs = logScale(cmin, cmax, H - MARGIN.b, MARGIN.t);
    doc.polyline(log.steps.map((s, i) => [xs(s), cs(Math.max(log.cfl[i], cmin))]), "#999999", 1);
    doc.text(W - MARGIN.r - 120, MARGIN.t + 14 * (log.residualNames.length + 1), "CFL", 10);
    doc.line(W - MARGIN.r - 150, MARGIN.t + 14 * (log.residualNames.length + 1) - 4,
      W - MARGIN.r - 128, MARGIN.t + 14 * (log.residualNames.length + 1) - 4, "#999999", 1);
  }
  return doc.render();
}

/** Cell-corner estimate from center coordinates (midpoints, edges extrapolated). */
function edges(centers: Float64Array, first: number | null = null): Float64Array {
  const n = centers.length;
  const e = new Float64Array(n + 1);
  for (let i = 1; i < n; i++) e[i] = 0.5 * (centers[i - 1] + centers[i]);
  e[0] = first !== null ? first : centers[0] - (e[1] - centers[0]);
  e[n] = centers[n - 1] + (centers[n - 1] - e[n - 1]);
  return e;
}

export function renderFieldMap(snap: Snapshot, field = "rho", logColor = true): string {
  const doc = new SvgDoc(W, H);
  const values = snap.data.get(field);
  if (!values) {
    throw new Error(`unknown field '${field}'; snapshot has: ${snap.columns.join(", ")}`);
  }
  frame(doc, `${field} map, meridional plane [${snap.meta.configHash}]`);
  const re = edges(snap.rCenters, Math.max(2 * snap.rCenters[0] - snap.rCenters[1], 0));
  const te = edges(snap.thCenters, 0);
  const rmax = re[re.length - 1];
  const xs = linearScale(0, rmax, MARGIN.l, W - MARGIN.r);
  const ys = linearScale(0, rmax * (H - MARGIN.t - MARGIN.b) / (W - MARGIN.l - MARGIN.r),
    H - MARGIN.b, MARGIN.t);
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    const t = logColor ? (v > 0 ? Math.log10(v) : NaN) : v;
    if (Number.isFinite(t)) {
      lo = Math.min(lo, t);
      hi = Math.max(hi, t);
    }
  }
  if (!(hi > lo)) { hi = lo + 1; }
  for (let j = 0; j < snap.nr; j++) {
    for (let k = 0; k < snap.nth; k++) {
      const v = values[j * snap.nth + k];
      const t = logColor ? (v > 0 ? Math.log10(v) : lo) : v;
      const corners: Array<[number, number]> = [];
      for (const [rr, tt] of [[re[j], te[k]], [re[j + 1], te[k]],
        [re[j + 1], te[k + 1]], [re[j], te[k + 1]]] as Array<[number, number]>) {
        corners.push([xs(rr * Math.cos(tt)), ys(rr * Math.sin(tt))]);
      }
      doc.polygon(corners, heat((t - lo) / (hi - lo)));
    }
  }
  doc.text(W / 2, H - 10, "x = r cos(theta)", 11, "middle");
  doc.text(16, H / 2, "z", 11, "middle");
  const label = logColor ? `log10 range [${lo.toFixed(2)}, ${hi.toFixed(2)}]`
    : `range [${lo.toExponential(2)}, ${hi.toExponential(2)}]`;
  doc.text(W - MARGIN.r, MARGIN.t - 6, label, 10, "end");
  return doc.render();
}

export function renderVectors(snap: Snapshot, stride = 2): string {
  const doc = new SvgDoc(W, H);
  frame(doc, `velocity field [${snap.meta.configHash}]`);
  const rho = snap.data.get("rho")!;
  const m = snap.data.get("m")!;
  const n = snap.data.get("n")!;
  const rmax = snap.rCenters[snap.rCenters.length - 1];
  const xs = linearScale(0, rmax, MARGIN.l, W - MARGIN.r);
  const ys = linearScale(0, rmax * (H - MARGIN.t - MARGIN.b) / (W - MARGIN.l - MARGIN.r),
    H - MARGIN.b, MARGIN.t);
  let vmax = 0;
  const comps: Array<[number, number, number, number]> = [];
  for (let j = 0; j < snap.nr; j += stride) {
    for (let k = 0; k < snap.nth; k += stride) {
      const idx = j * snap.nth + k;
      const r = snap.rCenters[j];
      const th = snap.thCenters[k];
      const vr = m[idx] / rho[idx];
      const vt = n[idx] / (rho[idx] * r);
      const vx = vr * Math.cos(th) - vt * Math.sin(th);
      const vz = vr * Math.sin(th) + vt * Math.cos(th);
      vmax = Math.max(vmax, Math.hypot(vx, vz));
      comps.push([r * Math.cos(th), r * Math.sin(th), vx, vz]);
    }
  }
  const arrow = 0.035 * rmax;
  for (const [x, z, vx, vz] of comps) {
    const s = vmax > 0 ? arrow / vmax : 0;
    doc.line(xs(x), ys(z), xs(x + vx * s), ys(z + vz * s), "#2471a3", 1);
    doc.add("circle", { cx: xs(x), cy: ys(z), r: 1.2, fill: "#2471a3" });
  }
  doc.text(W / 2, H - 10, `x = r cos(theta); longest arrow = ${vmax.toExponential(2)}`, 11, "middle");
  return doc.render();
}

export function renderSed(sed: Sed): string {
  const doc = new SvgDoc(W, H);
  frame(doc, `spectral energy distribution [${sed.meta.configHash}]`);
  const pos = Array.from(sed.nuLnu).filter((v) => v > 0);
  if (pos.length === 0) {
    doc.text(W / 2, H / 2, "spectrum is identically zero", 12, "middle");
    return doc.render();
  }
  const xs = logScale(sed.nu[0], sed.nu[sed.nu.length - 1], MARGIN.l, W - MARGIN.r);
  const hi = Math.max(...pos);
  const lo = Math.max(Math.min(...pos), hi * 1e-12);
  const ys = logScale(lo, hi, H - MARGIN.b, MARGIN.t);
  for (const t of xs.ticks) {
    doc.line(xs(t), H - MARGIN.b, xs(t), H - MARGIN.b + 4);
    doc.text(xs(t), H - MARGIN.b + 16, xs.label(t), 10, "middle");
  }
  for (const t of ys.ticks) {
    doc.line(MARGIN.l - 4, ys(t), MARGIN.l, ys(t));
    doc.text(MARGIN.l - 8, ys(t) + 4, ys.label(t), 10, "end");
  }
  const pts: Array<[number, number]> = [];
  for (let i = 0; i < sed.nu.length; i++) {
    if (sed.nuLnu[i] > 0) pts.push([xs(sed.nu[i]), ys(Math.max(sed.nuLnu[i], lo))]);
  }
  doc.polyline(pts, "#c0392b", 2);
  doc.text(W / 2, H - 10, "nu [Hz]", 11, "middle");
  doc.text(16, H / 2, "nu L_nu [erg/s]", 10, "middle");
  return doc.render();
}
