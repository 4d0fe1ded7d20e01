import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";
import { parsePolylines } from "../src/polylines.js";

const fixture = (name: string) =>
  readFileSync(new URL(`./fixtures/${name}`, import.meta.url), "utf-8");

describe("parsePolylines", () => {
  it("reads a closed single-chain file", () => {
    const f = parsePolylines(fixture("isoline_0.txt"), "step 0");
    expect(f.chains.length).toBe(1);
    expect(f.warnings).toEqual([]);
    const chain = f.chains[0];
    expect(chain[0]).toEqual(chain[chain.length - 1]);
  });

  it("splits chains on blank lines", () => {
    const text = "0 0\n1 0\n0 0\n\n0.5 0.5\n0.6 0.5\n0.5 0.5\n";
    const f = parsePolylines(text, "two");
    expect(f.chains.length).toBe(2);
  });

  it("warns on open chains but keeps them", () => {
    const f = parsePolylines("0 0\n1 0\n1 1\n", "open");
    expect(f.chains.length).toBe(1);
    expect(f.warnings.length).toBe(1);
    expect(f.warnings[0]).toMatch(/open/);
  });

  it("errors with a line number on malformed input", () => {
    expect(() => parsePolylines("0 0\n1\n", "bad")).toThrow(/line 2/);
    expect(() => parsePolylines("0 0\nx y\n", "bad")).toThrow(/line 2/);
  });
});
