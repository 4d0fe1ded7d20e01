/** Polyline files: one chain per block of "x y" lines, blank-line separated. */

export interface PolylineFile {
  label: string;
  chains: number[][][]; // chain -> point -> [x, y]
  warnings: string[];
}

export function parsePolylines(text: string, label: string): PolylineFile {
  const chains: number[][][] = [];
  let current: number[][] = [];
  const lines = text.split(/\r?\n/);
  for (let k = 0; k < lines.length; k++) {
    const line = lines[k].trim();
    if (line === "") {
      if (current.length > 0) {
        chains.push(current);
        current = [];
      }
      continue;
    }
    const parts = line.split(/\s+/);
    if (parts.length !== 2) {
      throw new Error(`line ${k + 1}: expected "x y", got "${line}"`);
    }
    const x = Number(parts[0]);
    const y = Number(parts[1]);
    if (!Number.isFinite(x) || !Number.isFinite(y)) {
      throw new Error(`line ${k + 1}: non-numeric point "${line}"`);
    }
    current.push([x, y]);
  }
  if (current.length > 0) chains.push(current);

  const warnings: string[] = [];
  chains.forEach((chain, idx) => {
    if (chain.length < 2) {
      warnings.push(`${label}: chain ${idx} has fewer than 2 points`);
      return;
    }
    const first = chain[0];
    const last = chain[chain.length - 1];
    if (first[0] !== last[0] || first[1] !== last[1]) {
      warnings.push(`${label}: chain ${idx} is open (rendered anyway)`);
    }
  });
  return { label, chains, warnings };
}
