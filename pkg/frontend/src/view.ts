/** DOM rendering: verdict feed, warning dialog, and latency dashboard. */

import { Verdict } from "./api.js";
import { DashboardModel } from "./dashboard.js";
import { FeedStore } from "./store.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, className?: string, text?: string): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function fmtTime(epoch: number): string {
  return new Date(epoch * 1000).toLocaleTimeString();
}

export function renderFeed(container: HTMLElement, verdicts: Verdict[]): void {
  container.replaceChildren();
  const table = el("table", "feed");
  const head = el("tr");
  for (const h of ["time", "domain", "label", "p(malicious)", "case", "source", "override"]) {
    head.appendChild(el("th", undefined, h));
  }
  table.appendChild(head);
  for (const v of [...verdicts].reverse()) {
    const row = el("tr", v.label === "malicious" ? "malicious" : "benign");
    row.appendChild(el("td", undefined, fmtTime(v.created_at)));
    row.appendChild(el("td", undefined, v.domain));
    row.appendChild(el("td", `label-${v.label}`, v.label));
    row.appendChild(el("td", undefined, v.probability.toFixed(3)));
    row.appendChild(el("td", undefined, String(v.decision_case)));
    row.appendChild(el("td", undefined, v.source));
    row.appendChild(el("td", undefined, v.override ? v.override.user_choice : "—"));
    table.appendChild(row);
  }
  container.appendChild(table);
}

export function renderDialog(container: HTMLElement, store: FeedStore,
                             screenshotUrl: (id: string) => string,
                             onMessage: (msg: string) => void): void {
  container.replaceChildren();
  const verdict = store.dialogVerdict();
  if (verdict === null) {
    container.classList.add("hidden");
    return;
  }
  container.classList.remove("hidden");
  const box = el("div", "dialog-box");
  box.appendChild(el("h2", "warning-title", "Warning: this page is likely malicious"));
  box.appendChild(el("p", undefined,
    `${verdict.domain} — malicious probability ${verdict.probability.toFixed(3)}`));

  const shot = el("img", "screenshot");
  shot.alt = "page screenshot";
  shot.src = screenshotUrl(verdict.verdict_id);
  shot.onerror = () => {
    shot.replaceWith(el("p", "no-screenshot", "(screenshot retention is off)"));
  };
  box.appendChild(shot);

  const actions = el("div", "dialog-actions");
  const buttons: Array<[string, "return_to_safety" | "ignore_warning" | "not_malicious", string]> = [
    ["Return to Safety", "return_to_safety",
     "Navigate away from this page (open a trusted site in your browser)."],
    ["Ignore Warning", "ignore_warning", "Warning dismissed for this page."],
    ["Not Malicious", "not_malicious", "Recorded as a false-positive override."],
  ];
  for (const [labelText, choice, message] of buttons) {
    const btn = el("button", `choice-${choice}`, labelText);
    btn.onclick = () => {
      void store.choose(choice).then((ok) => {
        if (ok) {
          onMessage(message);
        }
      });
    };
    actions.appendChild(btn);
  }
  box.appendChild(actions);
  container.appendChild(box);
}

export function renderDashboard(container: HTMLElement, model: DashboardModel): void {
  container.replaceChildren();
  container.appendChild(el("h2", undefined, "Inference latency"));
  if (model.empty) {
    container.appendChild(el("p", "placeholder", "No scans yet."));
    return;
  }
  const table = el("table", "stages");
  const head = el("tr");
  for (const h of ["stage", "count", "P50 (ms)", "P95 (ms)"]) {
    head.appendChild(el("th", undefined, h));
  }
  table.appendChild(head);
  const rows = [...model.rows,
                { stage: "total", count: model.cdf.length,
                  p50: model.totalP50, p95: model.totalP95 }];
  for (const r of rows) {
    const tr = el("tr");
    tr.appendChild(el("td", undefined, r.stage));
    tr.appendChild(el("td", undefined, String(r.count)));
    tr.appendChild(el("td", `p50-${r.stage}`, r.p50 === null ? "—" : r.p50.toFixed(1)));
    tr.appendChild(el("td", `p95-${r.stage}`, r.p95 === null ? "—" : r.p95.toFixed(1)));
    table.appendChild(tr);
  }
  container.appendChild(table);
  container.appendChild(renderCdfCanvas(model));
}

function renderCdfCanvas(model: DashboardModel): HTMLCanvasElement {
  const canvas = el("canvas", "cdf");
  canvas.width = 520;
  canvas.height = 220;
  const ctx = canvas.getContext("2d");
  if (!ctx || model.cdf.length === 0) {
    return canvas;
  }
  const pad = 36;
  const w = canvas.width - 2 * pad;
  const h = canvas.height - 2 * pad;
  const xMax = Math.max(...model.cdf.map((p) => p.value)) || 1;

  ctx.strokeStyle = "#888";
  ctx.strokeRect(pad, pad, w, h);
  ctx.strokeStyle = "#1565c0";
  ctx.beginPath();
  let prevY = canvas.height - pad;
  model.cdf.forEach((p, i) => {
    const x = pad + (p.value / xMax) * w;
    const y = canvas.height - pad - p.fraction * h;
    if (i === 0) {
      ctx.moveTo(x, prevY);
    }
    ctx.lineTo(x, prevY); // step function
    ctx.lineTo(x, y);
    prevY = y;
  });
  ctx.stroke();

  // P50/P95 guide lines
  ctx.strokeStyle = "#c62828";
  ctx.setLineDash([4, 3]);
  for (const q of [model.totalP50, model.totalP95]) {
    if (q === null) {
      continue;
    }
    const x = pad + (q / xMax) * w;
    ctx.beginPath();
    ctx.moveTo(x, pad);
    ctx.lineTo(x, canvas.height - pad);
    ctx.stroke();
  }
  ctx.setLineDash([]);
  ctx.fillStyle = "#333";
  ctx.fillText("0", pad - 10, canvas.height - pad + 12);
  ctx.fillText(`${xMax.toFixed(0)} ms`, pad + w - 24, canvas.height - pad + 12);
  return canvas;
}
