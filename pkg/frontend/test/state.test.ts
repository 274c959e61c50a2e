// Store semantics: alerts reflected synchronously on receipt (the "within
// one push interval" guarantee), unacknowledged indicators, log assembly.

import { describe, expect, it } from "vitest";
import { AlertStream } from "../src/api.js";
import { DashboardStore, alertLogLine } from "../src/state.js";
import type { AlertView, DeviceStatus } from "../src/types.js";

function riskyAlert(id = "dev1-1"): AlertView {
  return {
    device_id: "dev1",
    t: 12.5,
    kind: "RiskyEvent",
    alert_id: id,
    payload: { t_freefall: 4.0, t_impact: 4.4, t_alarm: 12.5, shock_score: 0.99 },
    acknowledged: false,
    ack_note: "",
  };
}

function status(overrides: Partial<DeviceStatus> = {}): DeviceStatus {
  return {
    device_id: "dev1",
    privacy: "full",
    last_seen_t: 100,
    level: 0.4,
    activity_class: "Walking",
    security: "Trusted",
    kcal_indicative: 1.2,
    unacknowledged_alerts: 0,
    ...overrides,
  };
}

describe("alert handling", () => {
  it("pushed alert is queued for popup and logged in the same tick", () => {
    const store = new DashboardStore();
    store.applyStatuses([status()]);
    const stream = new AlertStream("http://unused", () => {
      throw new Error("not used in this test");
    });
    stream.onAlert((alert) => store.applyAlert(alert));
    stream.handleEventData(JSON.stringify(riskyAlert()));
    // assertions run synchronously after the push: no poll needed
    expect(store.popupQueue.map((a) => a.alert_id)).toEqual(["dev1-1"]);
    const log = store.logFor("dev1");
    expect(log).toHaveLength(1);
    expect(log[0].text).toContain("RiskyEvent");
    expect(store.devices.get("dev1")?.unacknowledged_alerts).toBe(1);
  });

  it("duplicate alert ids are ignored", () => {
    const store = new DashboardStore();
    store.applyAlert(riskyAlert());
    store.applyAlert(riskyAlert());
    expect(store.alerts).toHaveLength(1);
    expect(store.popupQueue).toHaveLength(1);
  });

  it("unacknowledged indicator persists until ack", () => {
    const store = new DashboardStore();
    store.applyStatuses([status()]);
    store.applyAlert(riskyAlert());
    store.dismissPopup("dev1-1"); // dismissing the popup is not an ack
    expect(store.unacknowledgedCount()).toBe(1);
    store.acknowledge("dev1-1", "went to check");
    expect(store.unacknowledgedCount()).toBe(0);
    expect(store.alerts[0].ack_note).toBe("went to check");
    // acknowledged alerts remain in the list (append-only view)
    expect(store.alerts).toHaveLength(1);
  });

  it("notifies subscribers on every change", () => {
    const store = new DashboardStore();
    let calls = 0;
    store.subscribe(() => calls++);
    store.applyAlert(riskyAlert());
    store.acknowledge("dev1-1", "");
    expect(calls).toBe(2);
  });
});

describe("history merge and log", () => {
  it("dedups by timestamp and keeps order", () => {
    const store = new DashboardStore();
    const rec = (t: number) => ({
      device_id: "dev1",
      t,
      level: 0.1 * t,
      kcal_indicative: 0,
    });
    store.applyHistory("dev1", [rec(10), rec(20)]);
    store.applyHistory("dev1", [rec(20), rec(30)]);
    expect(store.history.get("dev1")?.map((r) => r.t)).toEqual([10, 20, 30]);
    expect(store.logFor("dev1")).toHaveLength(3);
  });

  it("risky alert log line carries the impact time", () => {
    const line = alertLogLine(riskyAlert());
    expect(line.text).toContain("impact at t=4.4s");
  });
});
