/**
 * Client-side mirrors of the service's canonical JSON types.
 *
 * The UI performs no domain math: these types carry service-computed
 * numbers to the views verbatim. Guards validate payload shape only.
 */

export const PPE_TYPES = [
  "gloves",
  "gowns",
  "surgical_masks",
  "n95_masks",
  "face_shields",
  "bouffants",
  "boot_covers",
] as const;
export type PpeToken = (typeof PPE_TYPES)[number];

export const INTERACTION_TYPES = [
  "vital_signs",
  "medication_admin",
  "lab_test",
  "xray",
  "ct",
  "mri",
  "ultrasound",
  "nuclear_medicine",
  "interventional_radiology",
  "tte",
  "tee",
  "bronchoscopy",
  "dialysis",
  "surgery",
  "room_transfer",
] as const;
export type InteractionToken = (typeof INTERACTION_TYPES)[number];

export type PpeMap = Record<PpeToken, number>;
export type RateRow = Partial<Record<InteractionToken, number>>;

export interface ReusePolicy {
  reusable_fraction: number;
  uses_per_item: number;
}

export interface UsageMatrix {
  base_row: RateRow;
  class_rows?: Record<string, RateRow>;
}

export interface UsageConfig {
  usage_matrices: Record<PpeToken, UsageMatrix>;
  staff_daily_use: PpeMap;
  staffing: { role: string; daily_count: number }[];
  reuse: Record<PpeToken, ReusePolicy>;
}

export interface ClassProfile {
  class_id: number;
  los_quantiles: Record<string, number>;
  daily_rates: RateRow;
  annual_discharges: number;
  member_count: number;
}

export interface Scenario {
  horizon_days: number;
  quantile_selection: string;
  arrival_scale: number;
  classes: ClassProfile[];
  usage: UsageConfig;
}

export interface QuantileForecast {
  quantile: string;
  staff: PpeMap;
  per_class: Record<string, PpeMap>;
  total: PpeMap;
  reuse_adjusted: PpeMap;
  procurement: Record<PpeToken, number>;
}

export interface ForecastReport {
  rows: QuantileForecast[];
  metadata: {
    scenario_hash: string;
    class_count: number;
    created_at: string | null;
  };
}

/** Body of GET /scenarios/{id}/forecast (and the CLI --json-out file). */
export interface ForecastPayload {
  reports: ForecastReport[];
  quantiles: string[];
}

export interface Violation {
  code: string;
  message: string;
  where: string;
}

export interface SensitivityDelta {
  absolute: number;
  relative: number | null;
}

export interface SensitivityEntry {
  name: string;
  report: ForecastReport;
  deltas: Record<string, Record<string, SensitivityDelta>>;
}

export interface SensitivityPayload {
  baseline: ForecastReport;
  entries: SensitivityEntry[];
}

function isObject(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

function isPpeMap(value: unknown): value is PpeMap {
  return isObject(value) && PPE_TYPES.every((p) => typeof value[p] === "number");
}

export function isQuantileForecast(value: unknown): value is QuantileForecast {
  if (!isObject(value)) return false;
  if (typeof value.quantile !== "string") return false;
  if (!isPpeMap(value.staff) || !isPpeMap(value.total)) return false;
  if (!isPpeMap(value.reuse_adjusted)) return false;
  if (!isObject(value.per_class)) return false;
  return Object.values(value.per_class).every(isPpeMap);
}

export function isForecastReport(value: unknown): value is ForecastReport {
  if (!isObject(value)) return false;
  if (!Array.isArray(value.rows) || !value.rows.every(isQuantileForecast)) {
    return false;
  }
  const metadata = value.metadata;
  return (
    isObject(metadata) &&
    typeof metadata.scenario_hash === "string" &&
    typeof metadata.class_count === "number"
  );
}

export function isForecastPayload(value: unknown): value is ForecastPayload {
  if (!isObject(value)) return false;
  if (!Array.isArray(value.quantiles)) return false;
  return Array.isArray(value.reports) && value.reports.every(isForecastReport);
}

export function isViolationList(value: unknown): value is Violation[] {
  return (
    Array.isArray(value) &&
    value.every(
      (v) =>
        isObject(v) && typeof v.code === "string" && typeof v.message === "string",
    )
  );
}

export function isSensitivityPayload(value: unknown): value is SensitivityPayload {
  if (!isObject(value)) return false;
  if (!isForecastReport(value.baseline)) return false;
  return (
    Array.isArray(value.entries) &&
    value.entries.every(
      (e) => isObject(e) && typeof e.name === "string" && isForecastReport(e.report),
    )
  );
}
