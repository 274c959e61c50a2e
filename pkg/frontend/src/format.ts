// View-model helpers. Coarse-privacy suppression happens here so every
// rendering path (tile, browse table, log) shares one rule.

import type { DeviceStatus, HistoryRecord } from "./types.js";

export interface TileView {
  deviceId: string;
  levelText: string;
  classText: string | null; // null = do not render the field at all
  securityText: string | null;
  kcalText: string;
  alertBadge: string | null;
  stale: boolean;
}

export function formatLevel(level: number | null): string {
  return level === null ? "–" : `${level.toFixed(3)} g`;
}

export function tileView(status: DeviceStatus, nowStreamT?: number): TileView {
  const coarse = status.privacy === "coarse";
  const stale =
    status.last_seen_t !== null &&
    nowStreamT !== undefined &&
    nowStreamT - status.last_seen_t > 30;
  return {
    deviceId: status.device_id,
    levelText: formatLevel(status.level),
    classText: coarse ? null : status.activity_class,
    securityText: coarse ? null : status.security,
    kcalText: `${status.kcal_indicative.toFixed(2)} kcal (indicative only)`,
    alertBadge:
      status.unacknowledged_alerts > 0 ? String(status.unacknowledged_alerts) : null,
    stale,
  };
}

export interface BrowseRow {
  t: string;
  level: string;
  activityClass: string;
  auth: string;
  security: string;
}

export function browseRow(rec: HistoryRecord, coarse: boolean): BrowseRow {
  return {
    t: rec.t.toFixed(1),
    level: formatLevel(rec.level),
    activityClass: coarse ? "" : rec.activity_class ?? "",
    auth:
      coarse || rec.auth_user === undefined
        ? ""
        : `${rec.auth_user} (${(rec.auth_score ?? 0).toFixed(2)})`,
    security: coarse ? "" : rec.security ?? "",
  };
}

// Settings form validation mirrors the server's rules (positive numbers,
// cutoff below a 25 Hz Nyquist bound) so bad values never reach the wire.
export interface SettingsField {
  key: string;
  label: string;
  min: number;
  max: number;
}

export const SETTINGS_FIELDS: SettingsField[] = [
  { key: "filter_cutoff_hz", label: "High-pass cutoff (Hz)", min: 0, max: 25 },
  { key: "high_activity_level_g", label: "High-activity level (g)", min: 0, max: 10 },
  { key: "high_activity_window_s", label: "High-activity window (s)", min: 0, max: 3600 },
  { key: "idle_timeout_s", label: "Idle timeout (s)", min: 0, max: 86400 },
  { key: "calorie_kcal_per_g_s", label: "Calorie coefficient (kcal per g·s)", min: 0, max: 10 },
];

export function validateSetting(field: SettingsField, raw: string): string | null {
  const value = Number(raw);
  if (raw.trim() === "" || !Number.isFinite(value)) {
    return `${field.label}: not a number`;
  }
  if (value <= field.min || value > field.max) {
    return `${field.label}: must be in (${field.min}, ${field.max}]`;
  }
  return null;
}
