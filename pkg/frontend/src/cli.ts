#!/usr/bin/env node
/**
 * Figure generation from identification-run outputs.
 *
 *   plot residuals <csv...> -o out.svg [--labels a,b,c]
 *   plot isolines <txt...> [--truth <txt>] -o out.svg
 *
 * Output is SVG: deterministic and dependency-free in Node.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { basename } from "node:path";
import { parseResidualCsv } from "./csv.js";
import { renderIsolines } from "./isolines.js";
import { parsePolylines } from "./polylines.js";
import { renderResiduals } from "./residuals.js";

interface Args {
  inputs: string[];
  out: string;
  labels?: string[];
  truth?: string;
}

function parseArgs(argv: string[]): Args {
  const inputs: string[] = [];
  let out = "";
  let labels: string[] | undefined;
  let truth: string | undefined;
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (a === "-o" || a === "--out") {
      out = argv[++i];
    } else if (a === "--labels") {
      labels = argv[++i].split(",");
    } else if (a === "--truth") {
      truth = argv[++i];
    } else if (a.startsWith("-")) {
      throw new Error(`unknown option ${a}`);
    } else {
      inputs.push(a);
    }
  }
  if (out === "") throw new Error("missing -o <output.svg>");
  if (!out.endsWith(".svg")) {
    throw new Error(
      `only SVG output is supported in this environment, got "${out}"`,
    );
  }
  return { inputs, out, labels, truth };
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === "residuals") {
      const args = parseArgs(rest);
      if (args.inputs.length === 0) throw new Error("no CSV files given");
      const traces = args.inputs.map((path, i) =>
        parseResidualCsv(
          readFileSync(path, "utf-8"),
          args.labels?.[i] ?? basename(path, ".csv"),
        ),
      );
      writeFileSync(args.out, renderResiduals(traces));
      process.stderr.write(`wrote ${args.out}\n`);
      return 0;
    }
    if (command === "isolines") {
      const args = parseArgs(rest);
      if (args.inputs.length === 0) throw new Error("no isoline files given");
      const files = args.inputs.map((path) =>
        parsePolylines(readFileSync(path, "utf-8"), basename(path, ".txt")),
      );
      const truth = args.truth
        ? parsePolylines(readFileSync(args.truth, "utf-8"), "target")
        : undefined;
      for (const f of [...files, ...(truth ? [truth] : [])]) {
        for (const w of f.warnings) process.stderr.write(`warning: ${w}\n`);
      }
      writeFileSync(args.out, renderIsolines(files, truth));
      process.stderr.write(`wrote ${args.out}\n`);
      return 0;
    }
    process.stderr.write(
      "usage: plot residuals <csv...> -o out.svg [--labels a,b,c]\n" +
        "       plot isolines <txt...> [--truth <txt>] -o out.svg\n",
    );
    return command ? 1 : 0;
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n`);
    return 1;
  }
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
