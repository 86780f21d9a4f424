/**
 * Thin fetch client for the forecasting service. Passes JSON through
 * unchanged; service errors surface verbatim for inline rendering.
 */

import {
  ForecastPayload,
  Scenario,
  SensitivityPayload,
  UsageConfig,
  Violation,
  isForecastPayload,
  isSensitivityPayload,
  isViolationList,
} from "./types.js";

export type ApiResult<T> =
  | { ok: true; value: T }
  | { ok: false; status: number; message: string; violations: Violation[] };

async function readError(response: Response): Promise<ApiResult<never>> {
  let message = `${response.status} ${response.statusText}`;
  let violations: Violation[] = [];
  try {
    const body: unknown = await response.json();
    if (typeof body === "object" && body !== null) {
      const record = body as Record<string, unknown>;
      if (typeof record.message === "string") {
        message = record.message;
      }
      if (isViolationList(record.violations)) {
        violations = record.violations;
      }
    }
  } catch {
    // non-JSON error body: keep the status line
  }
  return { ok: false, status: response.status, message, violations };
}

export class ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  private async request<T>(
    path: string,
    init: RequestInit,
    check: (value: unknown) => value is T,
  ): Promise<ApiResult<T>> {
    let response: Response;
    try {
      response = await fetch(this.baseUrl + path, init);
    } catch (error) {
      return {
        ok: false,
        status: 0,
        message: `service unreachable: ${String(error)}`,
        violations: [],
      };
    }
    if (!response.ok) {
      return readError(response);
    }
    const body: unknown = await response.json();
    if (!check(body)) {
      return {
        ok: false,
        status: response.status,
        message: "unexpected response shape",
        violations: [],
      };
    }
    return { ok: true, value: body };
  }

  getDefaults(): Promise<ApiResult<UsageConfig>> {
    return this.request(
      "/defaults",
      { method: "GET" },
      (v): v is UsageConfig => typeof v === "object" && v !== null,
    );
  }

  postScenario(scenario: Scenario): Promise<ApiResult<{ id: string }>> {
    return this.request(
      "/scenarios",
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(scenario),
      },
      (v): v is { id: string } =>
        typeof v === "object" &&
        v !== null &&
        typeof (v as { id?: unknown }).id === "string",
    );
  }

  getForecast(
    scenarioId: string,
    quantiles: string[] = ["q1", "median", "q3"],
  ): Promise<ApiResult<ForecastPayload>> {
    const query = encodeURIComponent(quantiles.join(","));
    return this.request(
      `/scenarios/${scenarioId}/forecast?quantiles=${query}`,
      { method: "GET" },
      isForecastPayload,
    );
  }

  postSensitivity(
    scenarioId: string,
    perturbations: unknown[],
  ): Promise<ApiResult<SensitivityPayload>> {
    return this.request(
      `/scenarios/${scenarioId}/sensitivity`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ perturbations }),
      },
      isSensitivityPayload,
    );
  }

  getClusters(
    datasetId: string,
    k: number,
    seed: number,
  ): Promise<ApiResult<{ profiles: unknown[] }>> {
    return this.request(
      `/datasets/${datasetId}/clusters?k=${k}&seed=${seed}`,
      { method: "GET" },
      (v): v is { profiles: unknown[] } =>
        typeof v === "object" &&
        v !== null &&
        Array.isArray((v as { profiles?: unknown }).profiles),
    );
  }
}
