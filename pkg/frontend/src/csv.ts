/**
 * Bound-table CSV export.
 *
 * The output must be byte-identical to the service CLI's CSV for the same
 * forecast payload: header `clusters,quantile,<7 PPE tokens>`, totals with
 * six fixed decimals, "\n" separators, trailing newline.
 */

import { ForecastPayload, PPE_TYPES } from "./types.js";

export function formatAmount(value: number): string {
  return value.toFixed(6);
}

export function buildBoundsCsv(payload: ForecastPayload): string {
  const lines: string[] = [`clusters,quantile,${PPE_TYPES.join(",")}`];
  for (const report of payload.reports) {
    for (const row of report.rows) {
      const values = PPE_TYPES.map((p) => formatAmount(row.total[p])).join(",");
      lines.push(`${report.metadata.class_count},${row.quantile},${values}`);
    }
  }
  return lines.join("\n") + "\n";
}
