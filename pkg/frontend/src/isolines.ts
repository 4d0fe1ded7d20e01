/** Overlaid zero-isolines on the unit square, equal-aspect, truth emphasized. */

import { PolylineFile } from "./polylines.js";
import { SERIES_COLORS, document, el, polylinePath, text } from "./svg.js";

const SIZE = 560;
const M = 40;

export function renderIsolines(
  files: PolylineFile[],
  truth?: PolylineFile,
): string {
  if (files.length === 0) {
    throw new Error("no isoline files given");
  }
  const W = SIZE + 2 * M;
  const px = (x: number) => M + x * SIZE;
  const py = (y: number) => M + (1 - y) * SIZE; // equal aspect by construction

  let body = el("rect", {
    x: M,
    y: M,
    width: SIZE,
    height: SIZE,
    fill: "none",
    stroke: "#444",
    "stroke-width": 1,
  });
  for (const v of [0, 0.25, 0.5, 0.75, 1]) {
    body += text(px(v), W - 12, v.toString(), {
      "text-anchor": "middle",
      "font-size": 11,
    });
    body += text(M - 6, py(v) + 4, v.toString(), {
      "text-anchor": "end",
      "font-size": 11,
    });
  }

  files.forEach((file, i) => {
    const color = SERIES_COLORS[i % SERIES_COLORS.length];
    for (const chain of file.chains) {
      const pts: [number, number][] = chain.map(([x, y]) => [px(x), py(y)]);
      body += el("path", {
        d: polylinePath(pts),
        fill: "none",
        stroke: color,
        "stroke-width": 1.4,
      });
    }
    const yy = M + 16 + 16 * i;
    body += el("line", {
      x1: M + 8,
      x2: M + 30,
      y1: yy - 4,
      y2: yy - 4,
      stroke: color,
      "stroke-width": 2,
    });
    body += text(M + 36, yy, file.label, { "font-size": 11 });
  });

  if (truth) {
    for (const chain of truth.chains) {
      const pts: [number, number][] = chain.map(([x, y]) => [px(x), py(y)]);
      body += el("path", {
        d: polylinePath(pts),
        fill: "none",
        stroke: "#c400c4",
        "stroke-width": 2.4,
        "stroke-dasharray": "7 4",
      });
    }
    const yy = M + 16 + 16 * files.length;
    body += el("line", {
      x1: M + 8,
      x2: M + 30,
      y1: yy - 4,
      y2: yy - 4,
      stroke: "#c400c4",
      "stroke-width": 2.4,
      "stroke-dasharray": "7 4",
    });
    body += text(M + 36, yy, truth.label, { "font-size": 11 });
  }

  return document(W, W, body);
}
