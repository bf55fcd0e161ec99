/** Typed client for the pagewatch verdict service. */

export interface OverrideRecord {
  verdict_id: string;
  user_choice: string;
  timestamp: number;
}

export interface Verdict {
  verdict_id: string;
  label: "benign" | "malicious";
  probability: number;
  source: "whitelist" | "inference" | "reused";
  decision_case: 1 | 2 | 3 | 4;
  latency_ms: Record<string, number>;
  domain: string;
  tab_id: string;
  created_at: number;
  schema_version: number;
  override: OverrideRecord | null;
}

export interface StagePercentiles {
  count: number;
  p50: number | null;
  p95: number | null;
}

export interface MetricsSummary {
  schema_version: number;
  scan_count: number;
  inference_count: number;
  stages: Record<string, StagePercentiles>;
  total_ms: { p50: number | null; p95: number | null };
  samples: { total_ms: number[] };
}

export type OverrideChoice = "return_to_safety" | "ignore_warning" | "not_malicious";

export class ServiceApi {
  constructor(readonly baseUrl: string) {}

  private async getJson<T>(path: string): Promise<T> {
    const res = await fetch(`${this.baseUrl}${path}`);
    if (!res.ok) {
      throw new Error(`GET ${path} failed: ${res.status}`);
    }
    return (await res.json()) as T;
  }

  async verdicts(since = 0): Promise<Verdict[]> {
    const body = await this.getJson<{ verdicts: Verdict[] }>(
      `/verdicts?since=${encodeURIComponent(since)}`,
    );
    return body.verdicts;
  }

  async metrics(): Promise<MetricsSummary> {
    return this.getJson<MetricsSummary>("/metrics");
  }

  async submitOverride(verdictId: string, choice: OverrideChoice): Promise<OverrideRecord> {
    const res = await fetch(`${this.baseUrl}/override`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ verdict_id: verdictId, choice }),
    });
    if (!res.ok) {
      throw new Error(`POST /override failed: ${res.status}`);
    }
    return (await res.json()) as OverrideRecord;
  }

  screenshotUrl(verdictId: string): string {
    return `${this.baseUrl}/screenshot/${encodeURIComponent(verdictId)}`;
  }
}
