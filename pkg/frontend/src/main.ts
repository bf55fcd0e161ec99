import { ServiceApi } from "./api.js";
import { buildDashboardModel } from "./dashboard.js";
import { FeedStore } from "./store.js";
import { renderDashboard, renderDialog, renderFeed } from "./view.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("service") ?? "http://127.0.0.1:8787";
const pollMs = Number(params.get("poll") ?? "1000");

const api = new ServiceApi(base);
const store = new FeedStore(api, pollMs);

const feedEl = document.getElementById("feed")!;
const dialogEl = document.getElementById("dialog")!;
const dashboardEl = document.getElementById("dashboard")!;
const statusEl = document.getElementById("status")!;
const messageEl = document.getElementById("message")!;

function showMessage(msg: string): void {
  messageEl.textContent = msg;
  messageEl.classList.remove("hidden");
  setTimeout(() => messageEl.classList.add("hidden"), 4000);
}

store.onChange((state) => {
  renderFeed(feedEl, state.verdicts);
  renderDialog(dialogEl, store, (id) => api.screenshotUrl(id), showMessage);
  if (state.serviceError !== null) {
    statusEl.textContent = state.pendingChoice
      ? `service unreachable — your choice is saved, retrying… (${state.serviceError})`
      : `service unreachable: ${state.serviceError}`;
    statusEl.className = "status error";
    if (state.pendingChoice && !state.overrideInFlight) {
      setTimeout(() => void store.retryPending(), 1500);
    }
  } else {
    statusEl.textContent = `connected to ${base} — ${state.verdicts.length} verdicts`
      + (store.dialogOpen ? " (feed paused: warning dialog open)" : "");
    statusEl.className = "status ok";
  }
});

async function refreshDashboard(): Promise<void> {
  try {
    const metrics = await api.metrics();
    renderDashboard(dashboardEl, buildDashboardModel(metrics));
  } catch {
    renderDashboard(dashboardEl, buildDashboardModel(null));
  }
}

store.start();
void store.tick();
void refreshDashboard();
setInterval(() => void refreshDashboard(), Math.max(2000, pollMs * 2));
