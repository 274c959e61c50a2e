// DOM components, hand-rolled. Each render function rebuilds its subtree
// from the store; main.ts wires them to store subscriptions.

import type { ApiClient } from "./api.js";
import { browseRow, SETTINGS_FIELDS, tileView, validateSetting } from "./format.js";
import { computeGeometry, paint } from "./plot.js";
import type { DashboardStore } from "./state.js";
import type { AlertView, HistoryFilter, ServiceConfig } from "./types.js";

function el(tag: string, className?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderTiles(
  root: HTMLElement,
  store: DashboardStore,
  onSelect: (deviceId: string) => void,
): void {
  root.innerHTML = "";
  const devices = [...store.devices.values()].sort((a, b) =>
    a.device_id.localeCompare(b.device_id),
  );
  for (const status of devices) {
    const view = tileView(status);
    const tile = el("div", "tile");
    tile.dataset.device = view.deviceId;
    tile.appendChild(el("h3", "tile-id", view.deviceId));
    const spark = document.createElement("canvas");
    spark.className = "sparkline";
    spark.width = 180;
    spark.height = 48;
    tile.appendChild(spark);
    const history = store.history.get(view.deviceId) ?? [];
    paint(spark, computeGeometry(history.slice(-60), [], spark.width, spark.height));
    tile.appendChild(el("div", "tile-level", view.levelText));
    if (view.classText !== null) {
      tile.appendChild(el("div", "tile-class", view.classText ?? "–"));
    }
    if (view.securityText !== null) {
      tile.appendChild(
        el("div", `tile-security sec-${(view.securityText ?? "none").toLowerCase()}`,
           view.securityText ?? "–"),
      );
    }
    tile.appendChild(el("div", "tile-kcal", view.kcalText));
    if (view.alertBadge) {
      tile.appendChild(el("span", "alert-badge", view.alertBadge));
    }
    if (view.stale) {
      tile.appendChild(el("div", "stale-banner", "stale data"));
    }
    tile.addEventListener("click", () => onSelect(view.deviceId));
    root.appendChild(tile);
  }
}

export function renderLiveView(
  root: HTMLElement,
  store: DashboardStore,
  deviceId: string | null,
): void {
  root.innerHTML = "";
  if (!deviceId) {
    root.appendChild(el("p", "hint", "select a device"));
    return;
  }
  root.appendChild(el("h2", undefined, `live: ${deviceId}`));
  if (!store.connected) {
    root.appendChild(el("div", "stale-banner", "connection lost – data may be stale"));
  }
  const canvas = document.createElement("canvas");
  canvas.width = 720;
  canvas.height = 240;
  canvas.id = "live-plot";
  root.appendChild(canvas);
  const history = store.history.get(deviceId) ?? [];
  const alerts = store.alerts.filter((a) => a.device_id === deviceId);
  paint(canvas, computeGeometry(history, alerts, canvas.width, canvas.height));
}

export function renderPopups(
  root: HTMLElement,
  store: DashboardStore,
  onAck: (alert: AlertView, note: string) => void,
): void {
  root.innerHTML = "";
  for (const alert of store.popupQueue) {
    const popup = el("div", "popup");
    popup.dataset.alertId = alert.alert_id;
    popup.appendChild(el("strong", undefined, `${alert.kind} on ${alert.device_id}`));
    popup.appendChild(el("div", "popup-body", `t=${alert.t.toFixed(1)}s`));
    const note = document.createElement("input");
    note.placeholder = "note";
    note.className = "ack-note";
    popup.appendChild(note);
    const ack = el("button", "ack-button", "acknowledge") as HTMLButtonElement;
    ack.addEventListener("click", () => onAck(alert, note.value));
    popup.appendChild(ack);
    root.appendChild(popup);
  }
}

export function renderLogPanel(root: HTMLElement, store: DashboardStore, deviceId: string | null): void {
  const scrollback = root.scrollTop;
  root.innerHTML = "";
  if (!deviceId) return;
  for (const line of store.logFor(deviceId)) {
    root.appendChild(el("div", "log-line", `[t=${line.t.toFixed(1)}] ${line.text}`));
  }
  root.scrollTop = scrollback;
}

export interface BrowseControls {
  form: HTMLElement;
  run: (filter: HistoryFilter) => Promise<void>;
}

export function renderBrowse(
  root: HTMLElement,
  api: ApiClient,
  store: DashboardStore,
  deviceId: string | null,
): BrowseControls {
  root.innerHTML = "";
  const form = el("div", "browse-form");
  const tStart = document.createElement("input");
  tStart.placeholder = "t start";
  const tEnd = document.createElement("input");
  tEnd.placeholder = "t end";
  const cls = document.createElement("select");
  for (const option of ["", "Walking", "Running", "Resting", "NoActivity"]) {
    const opt = document.createElement("option");
    opt.value = option;
    opt.textContent = option || "(any class)";
    cls.appendChild(opt);
  }
  const go = el("button", "browse-go", "search") as HTMLButtonElement;
  form.append(tStart, tEnd, cls, go);
  root.appendChild(form);
  const table = el("table", "browse-table");
  root.appendChild(table);

  const run = async (filter: HistoryFilter) => {
    if (!deviceId) return;
    const records = await api.history(deviceId, filter);
    const coarse = store.devices.get(deviceId)?.privacy === "coarse";
    table.innerHTML = "";
    const head = el("tr");
    for (const title of ["t (s)", "level", "class", "identity", "security"]) {
      head.appendChild(el("th", undefined, title));
    }
    table.appendChild(head);
    for (const rec of records) {
      const row = browseRow(rec, coarse);
      const tr = el("tr");
      tr.appendChild(el("td", undefined, row.t));
      tr.appendChild(el("td", undefined, row.level));
      tr.appendChild(el("td", undefined, row.activityClass));
      tr.appendChild(el("td", undefined, row.auth));
      tr.appendChild(el("td", undefined, row.security));
      table.appendChild(tr);
    }
  };

  go.addEventListener("click", () => {
    const filter: HistoryFilter = {};
    if (tStart.value.trim()) filter.t_start = Number(tStart.value);
    if (tEnd.value.trim()) filter.t_end = Number(tEnd.value);
    if (cls.value) filter.activity_class = cls.value as HistoryFilter["activity_class"];
    void run(filter);
  });
  return { form, run };
}

export function renderSettings(root: HTMLElement, api: ApiClient, config: ServiceConfig): void {
  root.innerHTML = "";
  root.appendChild(el("h2", undefined, "settings"));
  const error = el("div", "settings-error");
  const inputs = new Map<string, HTMLInputElement>();
  for (const field of SETTINGS_FIELDS) {
    const row = el("label", "settings-row", `${field.label} `);
    const input = document.createElement("input");
    input.value = String(config[field.key] ?? "");
    input.dataset.key = field.key;
    inputs.set(field.key, input);
    row.appendChild(input);
    root.appendChild(row);
  }
  const save = el("button", "settings-save", "save") as HTMLButtonElement;
  root.appendChild(save);
  root.appendChild(error);

  save.addEventListener("click", () => {
    void submitSettings(api, config, inputs, error);
  });
}

// exported for tests: validates client-side, sends only changed valid keys,
// sends nothing at all when the form is unchanged or any field is invalid
export async function submitSettings(
  api: ApiClient,
  config: ServiceConfig,
  inputs: Map<string, HTMLInputElement>,
  errorNode: HTMLElement,
): Promise<boolean> {
  const patch: Record<string, number> = {};
  for (const field of SETTINGS_FIELDS) {
    const input = inputs.get(field.key);
    if (!input) continue;
    const problem = validateSetting(field, input.value);
    if (problem) {
      errorNode.textContent = problem;
      return false;
    }
    const value = Number(input.value);
    if (value !== config[field.key]) {
      patch[field.key] = value;
    }
  }
  errorNode.textContent = "";
  if (Object.keys(patch).length === 0) {
    return false; // unchanged form: no request
  }
  const updated = await api.putConfig(patch);
  Object.assign(config, updated);
  return true;
}
