import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { FormatError, parseRunLog, parseSed, parseSnapshot } from "../src/formats.js";

const FIX = join(__dirname, "..", "fixtures");
const load = (name: string) => readFileSync(join(FIX, name), "utf8");

describe("run log parsing", () => {
  it("reads the documented CSV with its header", () => {
    const log = parseRunLog(load("runlog.csv"));
    expect(log.meta.kind).toBe("runlog");
    expect(log.meta.configHash).toMatch(/^[0-9a-f]+$/);
    expect(log.residualNames.length).toBeGreaterThan(0);
    expect(log.steps.length).toBe(log.residuals.length);
    expect(log.steps[0]).toBe(0);
  });

  it("rejects rows with the wrong field count, naming the line", () => {
    const text = load("runlog.csv") + "1,2,3\n";
    expect(() => parseRunLog(text)).toThrowError(FormatError);
    try {
      parseRunLog(text);
    } catch (err) {
      expect((err as Error).message).toMatch(/line \d+/);
    }
  });

  it("rejects files without the artifact header", () => {
    expect(() => parseRunLog("step,time\n1,2\n")).toThrowError(/header/);
  });
});

describe("snapshot parsing", () => {
  it("reconstructs the (nr, nth) layout", () => {
    const snap = parseSnapshot(load("snapshot.dat"));
    expect(snap.nr).toBe(24);
    expect(snap.nth).toBe(8);
    expect(snap.data.get("rho")!.length).toBe(24 * 8);
    expect(snap.rCenters[0]).toBeGreaterThan(1.0);
    expect(snap.rCenters[snap.nr - 1]).toBeLessThan(100.0);
    for (const v of snap.data.get("rho")!) expect(v).toBeGreaterThan(0);
  });

  it("rejects malformed rows", () => {
    const lines = load("snapshot.dat").split("\n");
    lines[5] = "0 0 broken";
    expect(() => parseSnapshot(lines.join("\n"))).toThrowError(/line 6/);
  });
});

describe("sed parsing", () => {
  it("reads the two-column spectrum", () => {
    const sed = parseSed(load("sed.dat"));
    expect(sed.nu.length).toBe(24);
    expect(sed.nu[0]).toBeLessThan(sed.nu[sed.nu.length - 1]);
  });

  it("rejects a non-numeric row", () => {
    const text = load("sed.dat") + "abc def\n";
    expect(() => parseSed(text)).toThrowError(/not a number/);
  });
});
