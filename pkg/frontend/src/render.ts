// HTML renderers. Pure string-in, string-out so they are testable without a
// DOM; main.ts assigns the results to innerHTML.

import type { PeerRow, PlanNode, TableDto, ViewRow } from "./api.js";
import type { TimelineEvent } from "./timeline.js";

export function escapeHtml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function formatBytes(n: number): string {
  if (n < 1024) return `${n} B`;
  if (n < 1024 * 1024) return `${(n / 1024).toFixed(1)} KiB`;
  return `${(n / (1024 * 1024)).toFixed(1)} MiB`;
}

export function renderPeerGrid(peers: PeerRow[]): string {
  if (peers.length === 0) {
    return '<p class="empty">No peers registered.</p>';
  }
  const cells = peers.map((p) => {
    const pct =
      p.capacityBytes > 0
        ? Math.min(100, Math.round((100 * p.usedBytes) / p.capacityBytes))
        : 0;
    return [
      `<button class="peer-cell" data-peer="${escapeHtml(p.peer)}">`,
      `<span class="peer-name">${escapeHtml(p.peer)}</span>`,
      `<span class="peer-counts">${p.views} views, ${p.documents} docs</span>`,
      `<span class="gauge"><span class="gauge-fill" style="width:${pct}%"></span></span>`,
      `<span class="gauge-label">${formatBytes(p.usedBytes)} / ${formatBytes(p.capacityBytes)}</span>`,
      "</button>",
    ].join("");
  });
  return `<div class="peer-grid">${cells.join("")}</div>`;
}

export function renderPeerViews(peer: string, views: ViewRow[]): string {
  if (views.length === 0) {
    return `<p class="empty">${escapeHtml(peer)} holds no views.</p>`;
  }
  const rows = views.map(
    (v) =>
      `<tr><td><code>${escapeHtml(v.pattern)}</code></td>` +
      `<td>${formatBytes(v.estimatedBytes)}</td>` +
      `<td>${formatBytes(v.actualBytes)}</td>` +
      `<td>${v.createdAtRound}</td></tr>`,
  );
  return (
    `<table class="views"><thead><tr><th>pattern</th><th>estimated</th>` +
    `<th>actual</th><th>round</th></tr></thead><tbody>${rows.join("")}</tbody></table>`
  );
}

export function renderTable(table: TableDto): string {
  const head = table.columns
    .map((c) => `<th>${escapeHtml(c)}</th>`)
    .join("");
  const body = table.rows
    .map(
      (row) =>
        `<tr>${row
          .map((cell) => `<td>${cell === null ? "<i>null</i>" : escapeHtml(cell)}</td>`)
          .join("")}</tr>`,
    )
    .join("");
  return `<table class="result"><thead><tr>${head}</tr></thead><tbody>${body}</tbody></table>`;
}

function planLabel(node: PlanNode): string {
  switch (node.op) {
    case "ViewScan":
      return `ViewScan ${node.view ?? ""} @ ${node.holder ?? "?"} (${formatBytes(node.estimatedBytes ?? 0)})`;
    case "DocShip":
      return `DocShip ${node.pattern ?? ""} (${(node.uris ?? []).length} documents)`;
    case "Navigate":
      return `Navigate ${String(node["subPattern"] ?? "")} over ${String(node["contColumn"] ?? "")}`;
    case "Select":
      return `Select ${String(node["column"] ?? "")} ${JSON.stringify(node["predicate"] ?? [])}`;
    case "Project":
      return `Project [${(node.columns ?? []).join(", ")}]`;
    case "IdJoin":
      return `IdJoin on ${String(node["sharedColumn"] ?? "")}`;
    case "StructJoin":
      return `StructJoin ${String(node["ancestor"] ?? "")} contains ${String(node["descendant"] ?? "")}`;
    case "ValJoin":
      return `ValJoin ${JSON.stringify(node["pairs"] ?? [])}`;
    default:
      return node.op;
  }
}

export function renderPlan(node: PlanNode): string {
  const label = `<span class="op op-${escapeHtml(node.op)}">${escapeHtml(planLabel(node))}</span>`;
  const children = node.children ?? [];
  if (children.length === 0) return `<li>${label}</li>`;
  const inner = children.map(renderPlan).join("");
  return `<li>${label}<ul>${inner}</ul></li>`;
}

export function renderPlanTree(root: PlanNode): string {
  return `<ul class="plan">${renderPlan(root)}</ul>`;
}

// Counts the transfer-bearing leaves of a plan (one per ViewScan, one per
// shipped document) for the inspector's footer line.
export function planLeafSummary(root: PlanNode): { viewScans: number; shippedDocs: number } {
  let viewScans = 0;
  let shippedDocs = 0;
  const stack: PlanNode[] = [root];
  while (stack.length > 0) {
    const node = stack.pop()!;
    if (node.op === "ViewScan") viewScans += 1;
    if (node.op === "DocShip") shippedDocs += (node.uris ?? []).length;
    stack.push(...(node.children ?? []));
  }
  return { viewScans, shippedDocs };
}

export function renderTimeline(events: readonly TimelineEvent[], limit = 200): string {
  const shown = events.slice(-limit);
  const items = shown.map((e) => {
    const detail =
      e.kind === "queryExecuted"
        ? `${escapeHtml(String(e.payload["peer"]))} ${escapeHtml(String(e.payload["query"]))} (${formatBytes(Number(e.payload["costBytes"] ?? 0))})`
        : e.kind === "roundCompleted"
          ? `round ${String(e.payload["round"])} window ${formatBytes(Number(e.payload["windowQueryBytes"] ?? 0))}` +
            (Object.keys((e.payload["appliedConfig"] as object) ?? {}).length > 0
              ? ` applied ${escapeHtml(JSON.stringify(e.payload["appliedConfig"]))}`
              : "")
          : `${escapeHtml(String(e.payload["peer"]))} ${escapeHtml(String(e.payload["pattern"]))}`;
    return `<li class="ev ev-${e.kind}"><span class="tick">t=${e.tick}</span> ${e.kind}: ${detail}</li>`;
  });
  return `<ol class="timeline">${items.join("")}</ol>`;
}
