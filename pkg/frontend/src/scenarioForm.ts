/**
 * Pure scenario-editing operations. Each edit returns a new Scenario
 * object ready to POST; no demand quantity is ever computed here.
 */

import {
  ClassProfile,
  InteractionToken,
  PPE_TYPES,
  PpeToken,
  Scenario,
  UsageConfig,
  Violation,
} from "./types.js";

function cloneScenario(scenario: Scenario): Scenario {
  return JSON.parse(JSON.stringify(scenario)) as Scenario;
}

export function scenarioFromParts(
  usage: UsageConfig,
  classes: ClassProfile[],
  horizonDays: number = 365,
  quantileSelection: string = "median",
): Scenario {
  return {
    horizon_days: horizonDays,
    quantile_selection: quantileSelection,
    arrival_scale: 1.0,
    classes,
    usage,
  };
}

export function setUsageEntry(
  scenario: Scenario,
  ppe: PpeToken,
  interaction: InteractionToken,
  value: number,
): Scenario {
  const next = cloneScenario(scenario);
  const matrix = next.usage.usage_matrices[ppe] ?? { base_row: {} };
  matrix.base_row = { ...matrix.base_row, [interaction]: value };
  if (value === 0) {
    delete matrix.base_row[interaction];
  }
  next.usage.usage_matrices[ppe] = matrix;
  return next;
}

export function zeroAllUsage(scenario: Scenario): Scenario {
  const next = cloneScenario(scenario);
  for (const ppe of PPE_TYPES) {
    next.usage.usage_matrices[ppe] = { base_row: {} };
  }
  return next;
}

export function setStaffDailyUse(
  scenario: Scenario,
  ppe: PpeToken,
  value: number,
): Scenario {
  const next = cloneScenario(scenario);
  next.usage.staff_daily_use[ppe] = value;
  return next;
}

export function setStaffingCount(
  scenario: Scenario,
  role: string,
  dailyCount: number,
): Scenario {
  const next = cloneScenario(scenario);
  for (const group of next.usage.staffing) {
    if (group.role === role) {
      group.daily_count = dailyCount;
    }
  }
  return next;
}

export function setReuse(
  scenario: Scenario,
  ppe: PpeToken,
  reusableFraction: number,
  usesPerItem: number,
): Scenario {
  const next = cloneScenario(scenario);
  next.usage.reuse[ppe] = {
    reusable_fraction: reusableFraction,
    uses_per_item: usesPerItem,
  };
  return next;
}

export function setArrivalScale(scenario: Scenario, scale: number): Scenario {
  const next = cloneScenario(scenario);
  next.arrival_scale = scale;
  return next;
}

export function setQuantileSelection(scenario: Scenario, label: string): Scenario {
  const next = cloneScenario(scenario);
  next.quantile_selection = label;
  return next;
}

export function setClasses(scenario: Scenario, classes: ClassProfile[]): Scenario {
  const next = cloneScenario(scenario);
  next.classes = JSON.parse(JSON.stringify(classes)) as ClassProfile[];
  return next;
}

/**
 * Maps a service violation to the id of the form element it concerns, so
 * the message can render inline against the offending field.
 */
export function fieldIdForViolation(violation: Violation): string | null {
  const where = violation.where ?? "";
  let match = where.match(/^usage\[(\w+)\]/);
  if (match) {
    return `usage-${match[1]}`;
  }
  match = where.match(/^staff_daily_use\[(\w+)\]/);
  if (match) {
    return `staff-use-${match[1]}`;
  }
  match = where.match(/^reuse\[(\w+)\]/);
  if (match) {
    return `reuse-${match[1]}`;
  }
  match = where.match(/^staffing\[(\w+)\]/);
  if (match) {
    return `staffing-${match[1]}`;
  }
  match = where.match(/^class (\d+)/);
  if (match) {
    return `class-${match[1]}`;
  }
  if (where === "horizon_days") {
    return "horizon-days";
  }
  if (where === "arrival_scale") {
    return "arrival-scale";
  }
  return null;
}
