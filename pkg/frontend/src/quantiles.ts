/** Percentile and CDF helpers matching the service's nearest-rank convention. */

export function percentile(samples: number[], q: number): number {
  if (samples.length === 0) {
    return NaN;
  }
  const ordered = [...samples].sort((a, b) => a - b);
  const idx = Math.max(0, Math.ceil((q / 100) * ordered.length) - 1);
  return ordered[idx];
}

export interface CdfPoint {
  value: number;
  fraction: number; // P(X <= value)
}

export function cdfPoints(samples: number[]): CdfPoint[] {
  const ordered = [...samples].sort((a, b) => a - b);
  return ordered.map((value, i) => ({ value, fraction: (i + 1) / ordered.length }));
}
