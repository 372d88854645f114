// Tick-ordered timeline fed from the metrics event stream. Records can arrive
// out of order after a reconnect; the timeline buffers and sorts by tick.

import type { MetricsRecord } from "./api.js";

export type TimelineKind =
  | "viewAdded"
  | "viewDropped"
  | "queryExecuted"
  | "roundCompleted";

export interface TimelineEvent {
  tick: number;
  kind: TimelineKind;
  payload: Record<string, unknown>;
}

// Flattens one metrics record into the console's event vocabulary.
export function recordToEvents(rec: MetricsRecord): TimelineEvent[] {
  const events: TimelineEvent[] = [];
  for (const q of rec.queries ?? []) {
    events.push({ tick: rec.tick, kind: "queryExecuted", payload: { ...q } });
  }
  for (const round of rec.rounds ?? []) {
    for (const report of round.reports) {
      for (const added of report.added) {
        events.push({
          tick: rec.tick,
          kind: "viewAdded",
          payload: { peer: report.peer, ...added },
        });
      }
      for (const pattern of report.dropped) {
        events.push({
          tick: rec.tick,
          kind: "viewDropped",
          payload: { peer: report.peer, pattern },
        });
      }
    }
    events.push({
      tick: rec.tick,
      kind: "roundCompleted",
      payload: {
        round: round.round,
        appliedConfig: round.appliedConfig,
        windowQueryBytes: round.windowQueryBytes,
      },
    });
  }
  return events;
}

export class Timeline {
  private events: TimelineEvent[] = [];
  private seenTicks = new Set<number>();

  // Ingests a record, skipping ticks already seen (idempotent re-fetch on
  // reconnect). Returns the events extracted from the record.
  ingest(rec: MetricsRecord): TimelineEvent[] {
    if (rec.type !== "tick" && rec.type !== "setup") return [];
    if (this.seenTicks.has(rec.tick)) return [];
    this.seenTicks.add(rec.tick);
    const fresh = recordToEvents(rec);
    this.events.push(...fresh);
    this.events.sort((a, b) => a.tick - b.tick);
    return fresh;
  }

  all(): readonly TimelineEvent[] {
    return this.events;
  }

  ofKind(kind: TimelineKind): TimelineEvent[] {
    return this.events.filter((e) => e.kind === kind);
  }
}
