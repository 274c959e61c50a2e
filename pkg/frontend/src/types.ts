// Wire types mirroring docs/api.md. The dashboard renders these verbatim;
// it never recomputes pipeline outputs client-side.

export type ActivityClass = "Walking" | "Running" | "Resting" | "NoActivity";
export type SecurityLevel = "Trusted" | "Elevated" | "Locked";
export type PrivacyMode = "full" | "coarse";

export type AlertKind =
  | "RiskyEvent"
  | "HighActivity"
  | "LowActivity"
  | "IdleTimeout"
  | "AuthLocked"
  | "StreamGap";

export interface DeviceStatus {
  device_id: string;
  privacy: PrivacyMode;
  last_seen_t: number | null;
  level: number | null;
  activity_class: ActivityClass | null;
  security: SecurityLevel | null;
  kcal_indicative: number;
  unacknowledged_alerts: number;
}

export interface HistoryRecord {
  device_id: string;
  t: number;
  level: number;
  kcal_indicative: number;
  activity_class?: ActivityClass;
  auth_user?: string;
  auth_score?: number;
  security?: SecurityLevel;
}

export interface AlertView {
  device_id: string;
  t: number;
  kind: AlertKind;
  alert_id: string;
  payload: Record<string, unknown>;
  acknowledged: boolean;
  ack_note: string;
}

export interface HistoryFilter {
  t_start?: number;
  t_end?: number;
  activity_class?: ActivityClass;
}

export interface AlertFilter {
  device_id?: string;
  kind?: AlertKind;
  since?: number;
  unacked?: boolean;
}

// config document as served by GET /api/config (subset used by the form)
export interface ServiceConfig {
  filter_cutoff_hz: number;
  tick_s: number;
  auth_window_s: number;
  high_activity_level_g: number;
  high_activity_window_s: number;
  idle_timeout_s: number;
  calorie_kcal_per_g_s: number;
  [key: string]: unknown;
}
