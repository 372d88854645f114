// Adaptation-parameter form logic. Validation here only rejects values the
// engine would reject anyway; the engine remains the authority.

import type { ConfigBody } from "./api.js";

export interface ControlInput {
  tauTicks?: string;
  theta?: string;
  budgetBytes?: string;
}

export type ControlResult =
  | { ok: true; body: ConfigBody }
  | { ok: false; error: string };

export function buildConfigBody(input: ControlInput): ControlResult {
  const body: ConfigBody = {};
  if (input.tauTicks !== undefined && input.tauTicks.trim() !== "") {
    const tau = Number(input.tauTicks);
    if (!Number.isInteger(tau) || tau < 1) {
      return { ok: false, error: "tau_ticks must be an integer >= 1" };
    }
    body.tau_ticks = tau;
  }
  if (input.theta !== undefined && input.theta.trim() !== "") {
    const theta = Number(input.theta);
    if (!Number.isFinite(theta) || theta < 1.0) {
      return { ok: false, error: "theta must be a number >= 1.0" };
    }
    body.theta = theta;
  }
  if (input.budgetBytes !== undefined && input.budgetBytes.trim() !== "") {
    const budget = Number(input.budgetBytes);
    if (!Number.isInteger(budget) || budget < 0) {
      return { ok: false, error: "budget_bytes must be an integer >= 0" };
    }
    body.budget_bytes = budget;
  }
  if (Object.keys(body).length === 0) {
    return { ok: false, error: "no parameter changes entered" };
  }
  return { ok: true, body };
}

// Config changes apply at the next round boundary. The panel shows a pending
// banner until a roundCompleted event whose appliedConfig covers every queued
// key arrives.
export function pendingBanner(pending: Record<string, unknown>): string {
  const keys = Object.keys(pending).sort();
  if (keys.length === 0) return "";
  const text = keys.map((k) => `${k}=${JSON.stringify(pending[k])}`).join(", ");
  return `pending until next round: ${text}`;
}

export function appliedCovers(
  pending: Record<string, unknown>,
  appliedConfig: Record<string, unknown>,
): boolean {
  return Object.keys(pending).every((k) => k in appliedConfig);
}
