/** Residual-history CSV parsing (schema: iter,J,beta_h1,T,seconds). */

export interface ResidualTrace {
  label: string;
  iter: number[];
  J: number[];
}

export const RESIDUAL_HEADER = "iter,J,beta_h1,T,seconds";

export function parseResidualCsv(text: string, label: string): ResidualTrace {
  const lines = text.split(/\r?\n/);
  if (lines.length === 0 || lines[0].trim() !== RESIDUAL_HEADER) {
    throw new Error(
      `residual CSV schema mismatch: expected header "${RESIDUAL_HEADER}", ` +
        `got "${(lines[0] ?? "").trim()}"`,
    );
  }
  const iter: number[] = [];
  const J: number[] = [];
  for (let k = 1; k < lines.length; k++) {
    const line = lines[k].trim();
    if (line === "") continue;
    const parts = line.split(",");
    if (parts.length !== 5) {
      throw new Error(`line ${k + 1}: expected 5 columns, got ${parts.length}`);
    }
    const it = Number(parts[0]);
    const j = Number(parts[1]);
    if (!Number.isFinite(it) || !Number.isFinite(j)) {
      throw new Error(`line ${k + 1}: non-numeric row "${line}"`);
    }
    iter.push(it);
    J.push(j);
  }
  return { label, iter, J };
}
