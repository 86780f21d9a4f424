/**
 * Pure HTML renderers for the bound table, the staff-vs-patient
 * decomposition, and the sensitivity panel.
 *
 * Every displayed quantity comes from a service response and is embedded
 * twice: exactly (`data-value`, the unmodified number) and as display text
 * (thousands grouping, presentation only). Bar geometry scales response
 * values to pixels; no derived quantity is shown.
 */

import {
  ForecastPayload,
  ForecastReport,
  PPE_TYPES,
  QuantileForecast,
  SensitivityPayload,
  Violation,
} from "./types.js";

const PPE_LABELS: Record<string, string> = {
  gloves: "Gloves",
  gowns: "Gowns",
  surgical_masks: "Surgical masks",
  n95_masks: "N95 masks",
  face_shields: "Face shields",
  bouffants: "Bouffants",
  boot_covers: "Boot covers",
};

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Presentation-only grouping; the exact value rides in data-value. */
export function displayAmount(value: number): string {
  return value.toLocaleString("en-US", { maximumFractionDigits: 1 });
}

function numberCell(value: number, extraClass = ""): string {
  return (
    `<td class="num ${extraClass}" data-value="${String(value)}">` +
    `${displayAmount(value)}</td>`
  );
}

export function boundsTableHtml(payload: ForecastPayload): string {
  if (payload.reports.length === 0) {
    return `<p class="empty">No forecast yet.</p>`;
  }
  const header =
    "<tr><th>Classes</th><th>LoS quantile</th>" +
    PPE_TYPES.map((p) => `<th>${PPE_LABELS[p]}</th>`).join("") +
    "</tr>";
  const body = payload.reports
    .flatMap((report) =>
      report.rows.map(
        (row) =>
          `<tr data-quantile="${escapeHtml(row.quantile)}">` +
          `<td>${report.metadata.class_count}</td>` +
          `<td>${escapeHtml(row.quantile)}</td>` +
          PPE_TYPES.map((p) => numberCell(row.total[p], `total-${p}`)).join("") +
          "</tr>",
      ),
    )
    .join("");
  return `<table class="bounds">${header}${body}</table>`;
}

export function reuseAdjustedTableHtml(payload: ForecastPayload): string {
  if (payload.reports.length === 0) {
    return "";
  }
  const header =
    "<tr><th>LoS quantile</th>" +
    PPE_TYPES.map((p) => `<th>${PPE_LABELS[p]}</th>`).join("") +
    "</tr>";
  const body = payload.reports
    .flatMap((report) =>
      report.rows.map(
        (row) =>
          `<tr data-quantile="${escapeHtml(row.quantile)}">` +
          `<td>${escapeHtml(row.quantile)}</td>` +
          PPE_TYPES.map((p) => numberCell(row.reuse_adjusted[p], `adjusted-${p}`)).join("") +
          "</tr>",
      ),
    )
    .join("");
  return `<table class="bounds adjusted">${header}${body}</table>`;
}

/**
 * Stacked staff + per-class segments for one quantile row. Segment widths
 * are proportional to the response values; each segment carries its exact
 * response value.
 */
export function decompositionHtml(row: QuantileForecast): string {
  const classIds = Object.keys(row.per_class).sort(
    (a, b) => Number(a) - Number(b),
  );
  const bars = PPE_TYPES.map((ppe) => {
    const total = row.total[ppe];
    const segments: string[] = [];
    const staffValue = row.staff[ppe];
    const width = (value: number) =>
      total > 0 ? ((100 * value) / total).toFixed(3) : "0";
    if (staffValue > 0) {
      segments.push(
        `<span class="seg staff" style="width:${width(staffValue)}%" ` +
          `data-component="staff" data-value="${String(staffValue)}" ` +
          `title="staff: ${displayAmount(staffValue)}"></span>`,
      );
    }
    for (const cid of classIds) {
      const value = row.per_class[cid][ppe];
      if (value > 0) {
        segments.push(
          `<span class="seg class-${cid}" style="width:${width(value)}%" ` +
            `data-component="class-${cid}" data-value="${String(value)}" ` +
            `title="class ${cid}: ${displayAmount(value)}"></span>`,
        );
      }
    }
    return (
      `<div class="decomp-row" data-ppe="${ppe}">` +
      `<span class="label">${PPE_LABELS[ppe]}</span>` +
      `<span class="bar">${segments.join("")}</span>` +
      `<span class="num" data-value="${String(total)}">${displayAmount(total)}</span>` +
      "</div>"
    );
  });
  return `<div class="decomposition" data-quantile="${escapeHtml(row.quantile)}">${bars.join("")}</div>`;
}

export function sensitivityHtml(payload: SensitivityPayload, quantile = "median"): string {
  if (payload.entries.length === 0) {
    return `<p class="empty">No sensitivity results.</p>`;
  }
  const blocks = payload.entries.map((entry) => {
    const deltas = entry.deltas[quantile] ?? {};
    const rows = PPE_TYPES.filter((p) => deltas[p] !== undefined)
      .map((ppe) => {
        const delta = deltas[ppe];
        const relative = delta.relative;
        const magnitude =
          relative === null ? 0 : Math.min(Math.abs(relative) * 100, 100);
        const sign = delta.absolute >= 0 ? "up" : "down";
        return (
          `<div class="tornado-row" data-ppe="${ppe}">` +
          `<span class="label">${PPE_LABELS[ppe]}</span>` +
          `<span class="bar ${sign}" style="width:${magnitude.toFixed(2)}%"></span>` +
          `<span class="num" data-value="${String(delta.absolute)}">` +
          `${displayAmount(delta.absolute)}</span>` +
          (relative === null
            ? `<span class="rel">n/a</span>`
            : `<span class="rel" data-value="${String(relative)}">` +
              `${(relative * 100).toFixed(1)}%</span>`) +
          "</div>"
        );
      })
      .join("");
    return (
      `<section class="tornado" data-perturbation="${escapeHtml(entry.name)}">` +
      `<h4>${escapeHtml(entry.name)}</h4>${rows}</section>`
    );
  });
  return blocks.join("");
}

export function violationsHtml(violations: Violation[]): string {
  if (violations.length === 0) {
    return "";
  }
  const items = violations
    .map(
      (v) =>
        `<li class="violation" data-code="${escapeHtml(v.code)}" ` +
        `data-where="${escapeHtml(v.where ?? "")}">` +
        `<code>${escapeHtml(v.code)}</code> ${escapeHtml(v.message)}</li>`,
    )
    .join("");
  return `<ul class="violations">${items}</ul>`;
}

export function statusHtml(report: ForecastReport | null, note: string): string {
  const hash = report ? report.metadata.scenario_hash.slice(0, 12) : "-";
  return `<span class="hash">scenario ${escapeHtml(hash)}</span> <span>${escapeHtml(note)}</span>`;
}
