// Bootstrap: poll statuses/history, subscribe to the alert push channel,
// and re-render panels on store changes. Network never blocks interaction;
// all fetches run on timers or user actions.

import { AlertStream, ApiClient } from "./api.js";
import {
  renderBrowse,
  renderLiveView,
  renderLogPanel,
  renderPopups,
  renderSettings,
  renderTiles,
} from "./components.js";
import { DashboardStore } from "./state.js";
import type { ServiceConfig } from "./types.js";

const POLL_MS = 2000;

export function startDashboard(root: HTMLElement, baseUrl = ""): void {
  const api = new ApiClient(baseUrl);
  const store = new DashboardStore();
  let selected: string | null = null;
  let config: ServiceConfig | null = null;

  root.innerHTML = `
    <header><h1>activity monitor</h1><span id="conn"></span></header>
    <div id="popups"></div>
    <main>
      <section id="tiles" class="panel"></section>
      <section id="live" class="panel"></section>
      <section id="browse" class="panel"></section>
      <section id="settings" class="panel"></section>
    </main>
    <aside id="log" class="panel"></aside>
  `;
  const tiles = root.querySelector("#tiles") as HTMLElement;
  const live = root.querySelector("#live") as HTMLElement;
  const browse = root.querySelector("#browse") as HTMLElement;
  const settings = root.querySelector("#settings") as HTMLElement;
  const log = root.querySelector("#log") as HTMLElement;
  const popups = root.querySelector("#popups") as HTMLElement;
  const conn = root.querySelector("#conn") as HTMLElement;

  const select = (deviceId: string) => {
    selected = deviceId;
    renderBrowse(browse, api, store, selected);
    rerender();
  };

  const rerender = () => {
    renderTiles(tiles, store, select);
    renderLiveView(live, store, selected);
    renderLogPanel(log, store, selected);
    renderPopups(popups, store, (alert, note) => {
      void api.acknowledge(alert.alert_id, note).then(() => {
        store.acknowledge(alert.alert_id, note);
      });
    });
    conn.textContent = store.connected ? "live" : "disconnected";
    conn.className = store.connected ? "conn-ok" : "conn-bad";
  };
  store.subscribe(rerender);

  const stream = new AlertStream(baseUrl);
  stream.onAlert((alert) => {
    store.applyAlert(alert);
    if (alert.kind === "RiskyEvent") {
      select(alert.device_id); // the affected device's screen pops up
    }
  });
  stream.onConnectionState((up) => store.setConnected(up));
  stream.connect();

  const poll = async () => {
    try {
      const statuses = await api.devices();
      store.applyStatuses(statuses);
      store.setConnected(true);
      if (selected) {
        const history = store.history.get(selected) ?? [];
        const since = history.length ? history[history.length - 1].t : undefined;
        store.applyHistory(selected, await api.history(selected, { t_start: since }));
      }
    } catch {
      store.setConnected(false);
    }
  };
  void poll();
  setInterval(() => void poll(), POLL_MS);

  void api.config().then((cfg) => {
    config = cfg;
    renderSettings(settings, api, config);
  });

  // initial alert backlog so unacknowledged indicators survive reloads
  void api.alerts({}).then((alerts) => {
    for (const alert of alerts) store.applyAlert(alert);
  });
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  startDashboard(document.getElementById("app") as HTMLElement);
}
