// Thin client over the documented service API. Every read the dashboard
// shows goes through here; tests inject `fetchFn` to point at fixtures.

import type {
  AlertFilter,
  AlertView,
  DeviceStatus,
  HistoryFilter,
  HistoryRecord,
  ServiceConfig,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export function buildQuery(params: Record<string, unknown>): string {
  const parts: string[] = [];
  for (const [key, value] of Object.entries(params)) {
    if (value === undefined || value === null) continue;
    parts.push(`${encodeURIComponent(key)}=${encodeURIComponent(String(value))}`);
  }
  return parts.length ? `?${parts.join("&")}` : "";
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`);
    if (!resp.ok) {
      throw new Error(`GET ${path} failed: ${resp.status}`);
    }
    return (await resp.json()) as T;
  }

  devices(): Promise<DeviceStatus[]> {
    return this.getJson("/api/devices");
  }

  status(deviceId: string): Promise<DeviceStatus> {
    return this.getJson(`/api/devices/${encodeURIComponent(deviceId)}/status`);
  }

  history(deviceId: string, filter: HistoryFilter = {}): Promise<HistoryRecord[]> {
    const query = buildQuery({
      t_start: filter.t_start,
      t_end: filter.t_end,
      activity_class: filter.activity_class,
    });
    return this.getJson(`/api/devices/${encodeURIComponent(deviceId)}/history${query}`);
  }

  alerts(filter: AlertFilter = {}): Promise<AlertView[]> {
    const query = buildQuery({
      device_id: filter.device_id,
      kind: filter.kind,
      since: filter.since,
      unacked: filter.unacked ? "true" : undefined,
    });
    return this.getJson(`/api/alerts${query}`);
  }

  async acknowledge(alertId: string, note: string): Promise<AlertView> {
    const resp = await this.fetchFn(
      `${this.baseUrl}/api/alerts/${encodeURIComponent(alertId)}/ack`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ note }),
      },
    );
    if (!resp.ok) throw new Error(`ack failed: ${resp.status}`);
    return (await resp.json()) as AlertView;
  }

  config(): Promise<ServiceConfig> {
    return this.getJson("/api/config");
  }

  async putConfig(patch: Partial<ServiceConfig>): Promise<ServiceConfig> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/config`, {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(patch),
    });
    if (!resp.ok) throw new Error(`config update rejected: ${resp.status}`);
    return (await resp.json()) as ServiceConfig;
  }
}

// Server-push alert subscription. The real transport is the SSE endpoint;
// tests drive `handleEventData` directly or inject a fake EventSource.
export type EventSourceFactory = (url: string) => EventSource;

export class AlertStream {
  private source: EventSource | null = null;
  private listeners: Array<(alert: AlertView) => void> = [];
  private stateListeners: Array<(connected: boolean) => void> = [];

  constructor(
    private baseUrl: string,
    private makeSource: EventSourceFactory = (url) => new EventSource(url),
  ) {}

  onAlert(fn: (alert: AlertView) => void): void {
    this.listeners.push(fn);
  }

  onConnectionState(fn: (connected: boolean) => void): void {
    this.stateListeners.push(fn);
  }

  handleEventData(data: string): void {
    const alert = JSON.parse(data) as AlertView;
    for (const fn of this.listeners) fn(alert);
  }

  connect(): void {
    this.source = this.makeSource(`${this.baseUrl}/api/alerts/stream`);
    this.source.addEventListener("alert", (ev) => {
      this.handleEventData((ev as MessageEvent).data);
    });
    this.source.onopen = () => this.stateListeners.forEach((fn) => fn(true));
    this.source.onerror = () => this.stateListeners.forEach((fn) => fn(false));
  }

  close(): void {
    this.source?.close();
    this.source = null;
  }
}
