/** Minimal deterministic SVG assembly: pure string building, fixed precision. */

export function fmt(v: number): string {
  if (v === 0) return "0";
  const s = v.toPrecision(8);
  return s.includes(".") || s.includes("e")
    ? s.replace(/\.?0+($|e)/, "$1")
    : s;
}

export function el(
  tag: string,
  attrs: Record<string, string | number>,
  body = "",
): string {
  const parts = Object.entries(attrs)
    .map(([k, v]) => `${k}="${typeof v === "number" ? fmt(v) : v}"`)
    .join(" ");
  return body === ""
    ? `<${tag} ${parts}/>`
    : `<${tag} ${parts}>${body}</${tag}>`;
}

export function text(
  x: number,
  y: number,
  content: string,
  attrs: Record<string, string | number> = {},
): string {
  return el("text", { x, y, "font-family": "sans-serif", ...attrs }, content);
}

export function polylinePath(points: [number, number][]): string {
  return points
    .map(([x, y], i) => `${i === 0 ? "M" : "L"}${fmt(x)} ${fmt(y)}`)
    .join("");
}

export function document(width: number, height: number, body: string): string {
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" ` +
    `height="${height}" viewBox="0 0 ${width} ${height}">\n` +
    `<rect x="0" y="0" width="${width}" height="${height}" fill="white"/>\n` +
    body +
    "\n</svg>\n"
  );
}

/** Curve palette: the three gradient variants keep their customary colors. */
export const SERIES_COLORS = [
  "#2a9d2a", // green
  "#1f5fbf", // blue
  "#d62728", // red
  "#9467bd",
  "#ff7f0e",
  "#17becf",
];
