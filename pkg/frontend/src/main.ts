// DOM wiring for the console. All state comes from the engine API; renderers
// in render.ts produce HTML strings that are assigned to innerHTML here.

import { ApiClient, ApiError } from "./api.js";
import { appliedCovers, buildConfigBody, pendingBanner } from "./controlPanel.js";
import {
  renderPeerGrid,
  renderPeerViews,
  renderPlanTree,
  renderTable,
  renderTimeline,
  planLeafSummary,
  escapeHtml,
} from "./render.js";
import { Timeline } from "./timeline.js";

const api = new ApiClient("");
const timeline = new Timeline();
let pending: Record<string, unknown> = {};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function showBanner(message: string, kind: "error" | "info"): void {
  const banner = el<HTMLDivElement>("banner");
  banner.textContent = message;
  banner.className = message ? `banner ${kind}` : "banner hidden";
}

async function refreshPeers(): Promise<void> {
  try {
    const peers = await api.getPeers();
    el("peer-grid").innerHTML = renderPeerGrid(peers);
    showBanner("", "info");
    for (const cell of document.querySelectorAll<HTMLButtonElement>(".peer-cell")) {
      cell.addEventListener("click", () => void openPeer(cell.dataset.peer ?? ""));
    }
  } catch {
    showBanner("engine API unreachable, retrying", "error");
  }
}

async function openPeer(peer: string): Promise<void> {
  const [views, stats] = await Promise.all([
    api.getPeerViews(peer),
    api.getPeerStats(peer),
  ]);
  const top = stats.windowQueries
    .slice(0, 5)
    .map((q) => `<li><code>${escapeHtml(q.query)}</code> x${q.count}</li>`)
    .join("");
  el("peer-detail").innerHTML =
    `<h3>${escapeHtml(peer)}</h3>` +
    renderPeerViews(peer, views) +
    `<h4>window queries</h4><ul>${top || "<li>none</li>"}</ul>`;
}

async function refreshState(): Promise<void> {
  const state = await api.getState();
  el("tick").textContent = String(state.tick);
  el("round").textContent = String(state.round);
  el("tau").setAttribute("placeholder", String(state.tauTicks));
  el("theta").setAttribute("placeholder", String(state.theta));
  el("pending").textContent = pendingBanner(state.pendingConfig);
  pending = state.pendingConfig;
}

function wireControlPanel(): void {
  el<HTMLButtonElement>("apply-config").addEventListener("click", () => {
    void (async () => {
      const result = buildConfigBody({
        tauTicks: el<HTMLInputElement>("tau").value,
        theta: el<HTMLInputElement>("theta").value,
        budgetBytes: el<HTMLInputElement>("budget").value,
      });
      if (!result.ok) {
        el("config-error").textContent = result.error;
        return;
      }
      el("config-error").textContent = "";
      try {
        const res = await api.postConfig(result.body);
        pending = res.pending;
        el("pending").textContent = pendingBanner(pending);
      } catch (err) {
        el("config-error").textContent =
          err instanceof ApiError ? err.message : String(err);
      }
    })();
  });

  el<HTMLButtonElement>("step").addEventListener("click", () => {
    void (async () => {
      const ticks = Number(el<HTMLInputElement>("step-ticks").value || "1");
      await api.step(ticks);
      await Promise.all([refreshState(), refreshPeers()]);
    })();
  });
}

function wireQueryBox(): void {
  el<HTMLButtonElement>("run-query").addEventListener("click", () => {
    void (async () => {
      const peer = el<HTMLInputElement>("query-peer").value;
      const query = el<HTMLInputElement>("query-text").value;
      try {
        const res = await api.submitQuery(peer, query);
        const leaves = planLeafSummary(res.plan);
        el("query-result").innerHTML =
          renderTable(res.table) +
          `<p>${res.rows} rows, ${res.costBytes} transfer bytes, ` +
          `${leaves.viewScans} view scans, ${leaves.shippedDocs} shipped documents</p>` +
          renderPlanTree(res.plan);
      } catch (err) {
        el("query-result").innerHTML = `<p class="error">${escapeHtml(
          err instanceof ApiError ? err.message : String(err),
        )}</p>`;
      }
    })();
  });
}

function subscribeEvents(): void {
  const controller = new AbortController();
  void api
    .streamEvents((rec) => {
      const fresh = timeline.ingest(rec);
      if (fresh.length > 0) {
        el("timeline").innerHTML = renderTimeline(timeline.all());
      }
      for (const round of rec.rounds ?? []) {
        if (appliedCovers(pending, round.appliedConfig)) {
          pending = {};
          el("pending").textContent = "";
        }
        void refreshState();
        void refreshPeers();
      }
    }, controller.signal)
    .catch(() => {
      // Idempotent re-subscribe on disconnect; the timeline skips seen ticks.
      setTimeout(subscribeEvents, 1000);
    });
}

export function start(): void {
  wireControlPanel();
  wireQueryBox();
  subscribeEvents();
  void refreshPeers();
  void refreshState();
}

if (typeof document !== "undefined" && document.getElementById("peer-grid")) {
  start();
}
