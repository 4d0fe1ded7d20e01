import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";
import { RESIDUAL_HEADER, parseResidualCsv } from "../src/csv.js";
import { renderIsolines } from "../src/isolines.js";
import { parsePolylines } from "../src/polylines.js";
import { renderResiduals } from "../src/residuals.js";

const fixture = (name: string) =>
  readFileSync(new URL(`./fixtures/${name}`, import.meta.url), "utf-8");

const VARIANTS = ["continuous", "discrete", "boundary"];

describe("renderResiduals", () => {
  const traces = VARIANTS.map((v) =>
    parseResidualCsv(fixture(`residuals_${v}.csv`), v),
  );

  it("draws one curve and one legend entry per trace", () => {
    const svg = renderResiduals(traces);
    expect((svg.match(/<path /g) ?? []).length).toBe(3);
    for (const v of VARIANTS) expect(svg).toContain(`>${v}</text>`);
  });

  it("is deterministic", () => {
    expect(renderResiduals(traces)).toBe(renderResiduals(traces));
  });

  it("renders empty axes for a header-only trace without crashing", () => {
    const empty = parseResidualCsv(`${RESIDUAL_HEADER}\n`, "empty");
    const svg = renderResiduals([empty]);
    expect(svg).toContain("<svg");
    expect((svg.match(/<path /g) ?? []).length).toBe(0);
  });

  it("uses a log axis with decade labels", () => {
    const svg = renderResiduals(traces);
    expect(svg).toContain(">1e-5</text>");
    expect(svg).toContain(">1e1</text>");
  });
});

describe("renderIsolines", () => {
  const steps = [0, 5, 10, 14].map((k) =>
    parsePolylines(fixture(`isoline_${k}.txt`), `step ${k}`),
  );
  const truth = parsePolylines(fixture("isoline_truth.txt"), "target");

  it("overlays all chains plus the emphasized truth", () => {
    const svg = renderIsolines(steps, truth);
    expect((svg.match(/<path /g) ?? []).length).toBe(5);
    expect(svg).toContain("stroke-dasharray");
    expect(svg).toContain(">target</text>");
  });

  it("is deterministic", () => {
    expect(renderIsolines(steps, truth)).toBe(renderIsolines(steps, truth));
  });

  it("rejects an empty file list", () => {
    expect(() => renderIsolines([])).toThrow(/no isoline files/);
  });

  it("renders open chains after warning at parse time", () => {
    const open = parsePolylines("0.2 0.2\n0.8 0.2\n0.8 0.8\n", "open");
    const svg = renderIsolines([open]);
    expect((svg.match(/<path /g) ?? []).length).toBe(1);
  });
});
