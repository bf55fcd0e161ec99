import { describe, expect, it } from "vitest";

import { cdfPoints, percentile } from "../src/quantiles.js";
import { buildDashboardModel } from "../src/dashboard.js";
import type { MetricsSummary } from "../src/api.js";

// fixed latency fixture with hand-computed nearest-rank quantiles:
// sorted: [60, 80, 90, 100, 110, 120, 130, 150, 200, 300]
const FIXTURE = [120, 80, 200, 150, 90, 110, 300, 60, 100, 130];

describe("percentile (nearest rank)", () => {
  it("matches hand-computed P50/P95 on the fixture", () => {
    expect(percentile(FIXTURE, 50)).toBe(110); // ceil(0.5*10) = 5th -> 110
    expect(percentile(FIXTURE, 95)).toBe(300); // ceil(9.5) = 10th -> 300
    expect(percentile(FIXTURE, 0)).toBe(60);
    expect(percentile(FIXTURE, 100)).toBe(300);
  });

  it("handles single samples and empty input", () => {
    expect(percentile([42], 50)).toBe(42);
    expect(Number.isNaN(percentile([], 50))).toBe(true);
  });

  it("p50 <= p95 always", () => {
    for (let n = 1; n < 30; n++) {
      const samples = Array.from({ length: n }, (_, i) => ((i * 37) % 19) + 1);
      expect(percentile(samples, 50)).toBeLessThanOrEqual(percentile(samples, 95));
    }
  });
});

describe("cdfPoints", () => {
  it("is a nondecreasing step function ending at 1", () => {
    const points = cdfPoints(FIXTURE);
    expect(points).toHaveLength(FIXTURE.length);
    expect(points[points.length - 1].fraction).toBe(1);
    for (let i = 1; i < points.length; i++) {
      expect(points[i].value).toBeGreaterThanOrEqual(points[i - 1].value);
      expect(points[i].fraction).toBeGreaterThan(points[i - 1].fraction);
    }
  });
});

function metricsWith(samples: number[]): MetricsSummary {
  return {
    schema_version: 1,
    scan_count: samples.length,
    inference_count: samples.length,
    stages: {
      normalize: { count: samples.length, p50: 20, p95: 30 },
      phash: { count: samples.length, p50: 5, p95: 8 },
      ocr: { count: samples.length, p50: 30, p95: 50 },
      model: { count: samples.length, p50: 45, p95: 70 },
    },
    total_ms: { p50: null, p95: null },
    samples: { total_ms: samples },
  };
}

describe("dashboard model", () => {
  it("renders hand-computed quantiles from the raw sample fixture", () => {
    const model = buildDashboardModel(metricsWith(FIXTURE));
    expect(model.empty).toBe(false);
    expect(model.totalP50).toBe(110);
    expect(model.totalP95).toBe(300);
    expect(model.rows.map((r) => r.stage)).toEqual(
      ["normalize", "phash", "ocr", "model"]);
  });

  it("zero scans renders the placeholder state", () => {
    const model = buildDashboardModel(metricsWith([]));
    expect(model.empty).toBe(true);
    expect(buildDashboardModel(null).empty).toBe(true);
  });

  it("p50 <= p95 holds in the rendered table", () => {
    const model = buildDashboardModel(metricsWith(FIXTURE));
    expect(model.totalP50!).toBeLessThanOrEqual(model.totalP95!);
    for (const row of model.rows) {
      expect(row.p50!).toBeLessThanOrEqual(row.p95!);
    }
  });
});
