/** Pure presentation model for the latency dashboard (testable without DOM). */

import { MetricsSummary } from "./api.js";
import { CdfPoint, cdfPoints, percentile } from "./quantiles.js";

export interface DashboardRow {
  stage: string;
  count: number;
  p50: number | null;
  p95: number | null;
}

export interface DashboardModel {
  empty: boolean;
  rows: DashboardRow[];
  totalP50: number | null;
  totalP95: number | null;
  cdf: CdfPoint[];
}

const STAGE_ORDER = ["normalize", "phash", "ocr", "model"];

export function buildDashboardModel(metrics: MetricsSummary | null): DashboardModel {
  if (metrics === null || metrics.scan_count === 0) {
    return { empty: true, rows: [], totalP50: null, totalP95: null, cdf: [] };
  }
  const rows: DashboardRow[] = STAGE_ORDER.map((stage) => {
    const s = metrics.stages[stage] ?? { count: 0, p50: null, p95: null };
    return { stage, count: s.count, p50: s.p50, p95: s.p95 };
  });
  const samples = metrics.samples.total_ms;
  // quantiles recomputed client-side from raw samples; must agree with the
  // service-reported values (same nearest-rank convention)
  const totalP50 = samples.length ? percentile(samples, 50) : metrics.total_ms.p50;
  const totalP95 = samples.length ? percentile(samples, 95) : metrics.total_ms.p95;
  return {
    empty: false,
    rows,
    totalP50,
    totalP95,
    cdf: cdfPoints(samples),
  };
}
