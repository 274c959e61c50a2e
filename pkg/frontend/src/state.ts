// Dashboard store: plain data + subscriber callbacks, no framework.
// Reducers are synchronous so an alert pushed by the server is reflected
// in the same tick it arrives (popup, log line, tile badge).

import type { AlertView, DeviceStatus, HistoryRecord } from "./types.js";

export interface LogLine {
  deviceId: string;
  t: number;
  text: string;
}

const MAX_LOG_LINES = 500;

export function alertLogLine(alert: AlertView): LogLine {
  let detail = "";
  if (alert.kind === "RiskyEvent") {
    const impact = alert.payload["t_impact"];
    detail = ` (impact at t=${Number(impact).toFixed(1)}s)`;
  }
  return {
    deviceId: alert.device_id,
    t: alert.t,
    text: `ALERT ${alert.kind}${detail}`,
  };
}

export function historyLogLine(rec: HistoryRecord): LogLine {
  const cls = rec.activity_class ? ` class=${rec.activity_class}` : "";
  const sec = rec.security ? ` security=${rec.security}` : "";
  return {
    deviceId: rec.device_id,
    t: rec.t,
    text: `level=${rec.level.toFixed(3)}g${cls}${sec}`,
  };
}

export class DashboardStore {
  devices = new Map<string, DeviceStatus>();
  history = new Map<string, HistoryRecord[]>();
  alerts: AlertView[] = [];
  popupQueue: AlertView[] = [];
  logs = new Map<string, LogLine[]>();
  connected = false;

  private subscribers: Array<() => void> = [];

  subscribe(fn: () => void): void {
    this.subscribers.push(fn);
  }

  private emit(): void {
    for (const fn of this.subscribers) fn();
  }

  applyStatuses(statuses: DeviceStatus[]): void {
    for (const status of statuses) {
      this.devices.set(status.device_id, status);
    }
    this.emit();
  }

  applyHistory(deviceId: string, records: HistoryRecord[]): void {
    const existing = this.history.get(deviceId) ?? [];
    const known = new Set(existing.map((r) => r.t));
    const merged = existing.concat(records.filter((r) => !known.has(r.t)));
    merged.sort((a, b) => a.t - b.t);
    this.history.set(deviceId, merged);
    for (const rec of records.filter((r) => !known.has(r.t))) {
      this.pushLog(historyLogLine(rec));
    }
    this.emit();
  }

  applyAlert(alert: AlertView): void {
    if (this.alerts.some((a) => a.alert_id === alert.alert_id)) return;
    this.alerts.push(alert);
    if (!alert.acknowledged) {
      this.popupQueue.push(alert);
    }
    this.pushLog(alertLogLine(alert));
    const device = this.devices.get(alert.device_id);
    if (device && !alert.acknowledged) {
      device.unacknowledged_alerts += 1;
    }
    this.emit();
  }

  acknowledge(alertId: string, note: string): void {
    const alert = this.alerts.find((a) => a.alert_id === alertId);
    if (alert && !alert.acknowledged) {
      alert.acknowledged = true;
      alert.ack_note = note;
      const device = this.devices.get(alert.device_id);
      if (device && device.unacknowledged_alerts > 0) {
        device.unacknowledged_alerts -= 1;
      }
    }
    this.popupQueue = this.popupQueue.filter((a) => a.alert_id !== alertId);
    this.emit();
  }

  dismissPopup(alertId: string): void {
    this.popupQueue = this.popupQueue.filter((a) => a.alert_id !== alertId);
    this.emit();
  }

  setConnected(connected: boolean): void {
    this.connected = connected;
    this.emit();
  }

  unacknowledgedCount(): number {
    return this.alerts.filter((a) => !a.acknowledged).length;
  }

  logFor(deviceId: string): LogLine[] {
    return this.logs.get(deviceId) ?? [];
  }

  private pushLog(line: LogLine): void {
    const lines = this.logs.get(line.deviceId) ?? [];
    lines.push(line);
    if (lines.length > MAX_LOG_LINES) {
      lines.splice(0, lines.length - MAX_LOG_LINES);
    }
    this.logs.set(line.deviceId, lines);
  }
}
