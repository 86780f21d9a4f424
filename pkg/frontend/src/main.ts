/**
 * DOM controller for the scenario explorer.
 *
 * Holds the editable Scenario, pushes every edit to the service (debounced,
 * latest edit wins), and hands service responses to the pure views. All
 * numbers on screen originate from service responses.
 */

import { ApiClient } from "./api.js";
import { buildBoundsCsv } from "./csv.js";
import {
  fieldIdForViolation,
  scenarioFromParts,
  setArrivalScale,
  setClasses,
  setQuantileSelection,
  setReuse,
  setStaffDailyUse,
  setStaffingCount,
  setUsageEntry,
  zeroAllUsage,
} from "./scenarioForm.js";
import { LatestWins, debounce } from "./sequence.js";
import {
  ClassProfile,
  ForecastPayload,
  INTERACTION_TYPES,
  InteractionToken,
  PPE_TYPES,
  PpeToken,
  Scenario,
  UsageConfig,
  Violation,
} from "./types.js";
import {
  boundsTableHtml,
  decompositionHtml,
  reuseAdjustedTableHtml,
  sensitivityHtml,
  statusHtml,
  violationsHtml,
} from "./views.js";

const api = new ApiClient("");
const forecastSequence = new LatestWins();
const sensitivitySequence = new LatestWins();

interface AppState {
  scenario: Scenario | null;
  lastForecast: ForecastPayload | null;
}

const state: AppState = { scenario: null, lastForecast: null };

const SENSITIVITY_PANEL = [
  { name: "volume +50%", arrival_scale_factor: 1.5 },
  { name: "volume x2", arrival_scale_factor: 2.0 },
  { name: "one extra staff mask/day", staff_use_delta: { surgical_masks: 1.0 } },
  { name: "no patient usage", usage_scale: 0.0 },
];

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) {
    throw new Error(`missing element #${id}`);
  }
  return found as T;
}

function setHtml(id: string, html: string): void {
  el(id).innerHTML = html;
}

// ---------------------------------------------------------------------------
// Editor construction (inputs seeded from the service defaults)
// ---------------------------------------------------------------------------

function numberInput(id: string, value: number, step: string, min = "0"): string {
  return (
    `<input type="number" id="${id}" value="${String(value)}" ` +
    `step="${step}" min="${min}">`
  );
}

function buildUsageGrid(usage: UsageConfig): string {
  const head =
    "<tr><th>Interaction</th>" +
    PPE_TYPES.map((p) => `<th id="usage-${p}">${p.replace("_", " ")}</th>`).join("") +
    "</tr>";
  const rows = INTERACTION_TYPES.map((interaction) => {
    const cells = PPE_TYPES.map((ppe) => {
      const value = usage.usage_matrices[ppe]?.base_row[interaction] ?? 0;
      return `<td>${numberInput(`usage-${ppe}-${interaction}`, value, "0.5")}</td>`;
    }).join("");
    return `<tr><td class="label">${interaction.replace(/_/g, " ")}</td>${cells}</tr>`;
  }).join("");
  return `<table class="grid">${head}${rows}</table>`;
}

function buildStaffPanel(usage: UsageConfig): string {
  const use = PPE_TYPES.map(
    (ppe) =>
      `<label id="staff-use-${ppe}">${ppe.replace("_", " ")} ` +
      `${numberInput(`staff-use-${ppe}-input`, usage.staff_daily_use[ppe] ?? 0, "0.1")}</label>`,
  ).join("");
  const staffing = usage.staffing
    .map(
      (group) =>
        `<label id="staffing-${group.role}">${group.role.replace(/_/g, " ")} ` +
        `${numberInput(`staffing-${group.role}-input`, group.daily_count, "1")}</label>`,
    )
    .join("");
  return (
    `<fieldset><legend>Staff daily use (items/work-day)</legend>${use}</fieldset>` +
    `<fieldset><legend>Daily staffing</legend>${staffing}</fieldset>`
  );
}

function buildReusePanel(usage: UsageConfig): string {
  const rows = PPE_TYPES.map((ppe) => {
    const policy = usage.reuse[ppe] ?? { reusable_fraction: 0, uses_per_item: 1 };
    return (
      `<div class="reuse-row" id="reuse-${ppe}">` +
      `<span class="label">${ppe.replace("_", " ")}</span>` +
      `<input type="range" id="reuse-${ppe}-fraction" min="0" max="1" step="0.05" ` +
      `value="${String(policy.reusable_fraction)}">` +
      `<span id="reuse-${ppe}-fraction-echo">${policy.reusable_fraction}</span>` +
      ` over ${numberInput(`reuse-${ppe}-uses`, policy.uses_per_item, "1", "1")} uses` +
      "</div>"
    );
  }).join("");
  return rows;
}

// ---------------------------------------------------------------------------
// Service round trip
// ---------------------------------------------------------------------------

function clearFieldMarks(): void {
  document
    .querySelectorAll(".invalid")
    .forEach((node) => node.classList.remove("invalid"));
}

function markViolations(violations: Violation[]): void {
  clearFieldMarks();
  for (const violation of violations) {
    const id = fieldIdForViolation(violation);
    const node = id ? document.getElementById(id) : null;
    if (node) {
      node.classList.add("invalid");
    }
  }
  setHtml("violations", violationsHtml(violations));
}

async function pushScenario(): Promise<void> {
  if (!state.scenario) {
    return;
  }
  const seq = forecastSequence.begin();
  const posted = await api.postScenario(state.scenario);
  if (!posted.ok) {
    if (!forecastSequence.accept(seq)) {
      return;
    }
    markViolations(posted.violations);
    setHtml(
      "status",
      statusHtml(null, `${posted.message} <button id="retry">retry</button>`),
    );
    const retry = document.getElementById("retry");
    retry?.addEventListener("click", () => void pushScenario());
    return;
  }
  const forecast = await api.getForecast(posted.value.id);
  if (!forecastSequence.accept(seq)) {
    return; // a newer edit is in flight
  }
  if (!forecast.ok) {
    markViolations(forecast.violations);
    setHtml("status", statusHtml(null, forecast.message));
    return;
  }
  clearFieldMarks();
  setHtml("violations", "");
  state.lastForecast = forecast.value;
  renderForecast(forecast.value);
  setHtml("status", statusHtml(forecast.value.reports[0] ?? null, "up to date"));

  const sensitivitySeq = sensitivitySequence.begin();
  const sensitivity = await api.postSensitivity(posted.value.id, SENSITIVITY_PANEL);
  if (!sensitivitySequence.accept(sensitivitySeq)) {
    return;
  }
  setHtml(
    "sensitivity",
    sensitivity.ok ? sensitivityHtml(sensitivity.value) : sensitivity.message,
  );
}

const schedulePush = debounce(300, () => void pushScenario());

function renderForecast(payload: ForecastPayload): void {
  setHtml("bounds", boundsTableHtml(payload));
  setHtml("adjusted", reuseAdjustedTableHtml(payload));
  const report = payload.reports[0];
  const medianRow =
    report?.rows.find((row) => row.quantile === "median") ?? report?.rows[0];
  setHtml("decomposition", medianRow ? decompositionHtml(medianRow) : "");
}

function updateScenario(next: Scenario): void {
  state.scenario = next;
  schedulePush();
}

// ---------------------------------------------------------------------------
// Wiring
// ---------------------------------------------------------------------------

function bindEditor(): void {
  const scenario = state.scenario;
  if (!scenario) {
    return;
  }
  for (const ppe of PPE_TYPES) {
    for (const interaction of INTERACTION_TYPES) {
      const input = el<HTMLInputElement>(`usage-${ppe}-${interaction}`);
      input.addEventListener("input", () => {
        if (state.scenario) {
          updateScenario(
            setUsageEntry(
              state.scenario,
              ppe as PpeToken,
              interaction as InteractionToken,
              Number(input.value),
            ),
          );
        }
      });
    }
    const staffInput = el<HTMLInputElement>(`staff-use-${ppe}-input`);
    staffInput.addEventListener("input", () => {
      if (state.scenario) {
        updateScenario(
          setStaffDailyUse(state.scenario, ppe as PpeToken, Number(staffInput.value)),
        );
      }
    });
    const fractionInput = el<HTMLInputElement>(`reuse-${ppe}-fraction`);
    const usesInput = el<HTMLInputElement>(`reuse-${ppe}-uses`);
    const onReuse = () => {
      el(`reuse-${ppe}-fraction-echo`).textContent = fractionInput.value;
      if (state.scenario) {
        updateScenario(
          setReuse(
            state.scenario,
            ppe as PpeToken,
            Number(fractionInput.value),
            Math.max(1, Math.round(Number(usesInput.value))),
          ),
        );
      }
    };
    fractionInput.addEventListener("input", onReuse);
    usesInput.addEventListener("input", onReuse);
  }
  for (const group of scenario.usage.staffing) {
    const input = el<HTMLInputElement>(`staffing-${group.role}-input`);
    input.addEventListener("input", () => {
      if (state.scenario) {
        updateScenario(
          setStaffingCount(state.scenario, group.role, Number(input.value)),
        );
      }
    });
  }

  const arrival = el<HTMLInputElement>("arrival-scale");
  arrival.addEventListener("input", () => {
    el("arrival-scale-echo").textContent = arrival.value;
    if (state.scenario) {
      updateScenario(setArrivalScale(state.scenario, Number(arrival.value)));
    }
  });
  const quantile = el<HTMLSelectElement>("quantile-selection");
  quantile.addEventListener("change", () => {
    if (state.scenario) {
      updateScenario(setQuantileSelection(state.scenario, quantile.value));
    }
  });
  el("zero-usage").addEventListener("click", () => {
    if (state.scenario) {
      updateScenario(zeroAllUsage(state.scenario));
      seedEditor(state.scenario.usage);
      bindEditor();
    }
  });
  el("export-csv").addEventListener("click", () => {
    if (!state.lastForecast) {
      return;
    }
    const blob = new Blob([buildBoundsCsv(state.lastForecast)], {
      type: "text/csv",
    });
    const link = document.createElement("a");
    link.href = URL.createObjectURL(blob);
    link.download = "ppe_bounds.csv";
    link.click();
    URL.revokeObjectURL(link.href);
  });

  const clusterCount = el<HTMLSelectElement>("cluster-count");
  clusterCount.addEventListener("change", () => void loadClusters());
  el("load-clusters").addEventListener("click", () => void loadClusters());
}

async function loadClusters(): Promise<void> {
  const datasetId = el<HTMLInputElement>("dataset-id").value.trim();
  const k = Number(el<HTMLSelectElement>("cluster-count").value);
  if (!datasetId) {
    return;
  }
  const result = await api.getClusters(datasetId, k, 0);
  if (!result.ok) {
    setHtml("status", statusHtml(null, result.message));
    return;
  }
  if (state.scenario) {
    updateScenario(
      setClasses(state.scenario, result.value.profiles as ClassProfile[]),
    );
  }
}

function seedEditor(usage: UsageConfig): void {
  setHtml("usage-grid", buildUsageGrid(usage));
  setHtml("staff-panel", buildStaffPanel(usage));
  setHtml("reuse-panel", buildReusePanel(usage));
}

async function start(): Promise<void> {
  const defaults = await api.getDefaults();
  if (!defaults.ok) {
    setHtml("status", statusHtml(null, `cannot load defaults: ${defaults.message}`));
    return;
  }
  state.scenario = scenarioFromParts(defaults.value, []);
  seedEditor(defaults.value);
  bindEditor();
  setHtml("status", statusHtml(null, "edit the scenario or load dataset clusters"));
  schedulePush();
}

document.addEventListener("DOMContentLoaded", () => void start());
