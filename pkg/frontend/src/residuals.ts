/** Residual-evolution comparison figure: J vs iteration on a log axis. */

import { ResidualTrace } from "./csv.js";
import { SERIES_COLORS, document, el, fmt, polylinePath, text } from "./svg.js";

const W = 720;
const H = 480;
const M = { left: 72, right: 24, top: 24, bottom: 48 };

export function renderResiduals(traces: ResidualTrace[]): string {
  const plotW = W - M.left - M.right;
  const plotH = H - M.top - M.bottom;
  const nonEmpty = traces.filter((t) => t.J.length > 0);

  let body = el("rect", {
    x: M.left,
    y: M.top,
    width: plotW,
    height: plotH,
    fill: "none",
    stroke: "#444",
    "stroke-width": 1,
  });

  let maxIter = 1;
  let minJ = 1e-1;
  let maxJ = 1;
  if (nonEmpty.length > 0) {
    maxIter = Math.max(...nonEmpty.map((t) => t.iter[t.iter.length - 1]), 1);
    const allJ = nonEmpty.flatMap((t) => t.J).filter((j) => j > 0);
    minJ = Math.min(...allJ);
    maxJ = Math.max(...allJ);
  }
  const kLo = Math.floor(Math.log10(minJ));
  const kHi = Math.ceil(Math.log10(maxJ));
  const x = (it: number) => M.left + (it / maxIter) * plotW;
  const y = (j: number) =>
    M.top + plotH - ((Math.log10(j) - kLo) / Math.max(kHi - kLo, 1)) * plotH;

  // decade gridlines and labels
  for (let k = kLo; k <= kHi; k++) {
    const yy = y(Math.pow(10, k));
    body += el("line", {
      x1: M.left,
      x2: M.left + plotW,
      y1: yy,
      y2: yy,
      stroke: "#ddd",
      "stroke-width": 1,
    });
    body += text(M.left - 8, yy + 4, `1e${k}`, {
      "text-anchor": "end",
      "font-size": 12,
    });
  }
  const xTicks = niceTicks(0, maxIter, 8);
  for (const tk of xTicks) {
    const xx = x(tk);
    body += el("line", {
      x1: xx,
      x2: xx,
      y1: M.top + plotH,
      y2: M.top + plotH + 5,
      stroke: "#444",
      "stroke-width": 1,
    });
    body += text(xx, M.top + plotH + 20, fmt(tk), {
      "text-anchor": "middle",
      "font-size": 12,
    });
  }
  body += text(M.left + plotW / 2, H - 10, "iteration", {
    "text-anchor": "middle",
    "font-size": 13,
  });
  body += text(16, M.top + plotH / 2, "J", { "font-size": 13 });

  nonEmpty.forEach((t, i) => {
    const pts: [number, number][] = t.iter.map((it, k) => [
      x(it),
      y(Math.max(t.J[k], Math.pow(10, kLo))),
    ]);
    body += el("path", {
      d: polylinePath(pts),
      fill: "none",
      stroke: SERIES_COLORS[i % SERIES_COLORS.length],
      "stroke-width": 1.6,
    });
  });

  // legend
  nonEmpty.forEach((t, i) => {
    const yy = M.top + 16 + 18 * i;
    const xx = M.left + plotW - 150;
    body += el("line", {
      x1: xx,
      x2: xx + 26,
      y1: yy - 4,
      y2: yy - 4,
      stroke: SERIES_COLORS[i % SERIES_COLORS.length],
      "stroke-width": 2,
    });
    body += text(xx + 32, yy, t.label, { "font-size": 12 });
  });

  return document(W, H, body);
}

function niceTicks(lo: number, hi: number, count: number): number[] {
  const span = hi - lo || 1;
  const step = Math.pow(10, Math.floor(Math.log10(span / count)));
  const err = span / count / step;
  const mult = err >= 7.5 ? 10 : err >= 3.5 ? 5 : err >= 1.5 ? 2 : 1;
  const s = step * mult;
  const ticks: number[] = [];
  for (let v = Math.ceil(lo / s) * s; v <= hi + 1e-12; v += s) ticks.push(v);
  return ticks;
}
