// Integration parity against a real running service (not fixtures).
// Skipped unless ACTIMON_URL points at a live server, e.g.
//   actimon serve --data-dir data --http-port 8321 ... &
//   ACTIMON_URL=http://127.0.0.1:8321 npm test
// Useful after API-affecting changes on either side.

import { describe, expect, it } from "vitest";
import { ApiClient, buildQuery } from "../src/api.js";
import type { HistoryFilter } from "../src/types.js";

const BASE = process.env.ACTIMON_URL;

describe.skipIf(!BASE)("live service parity", () => {
  it("browse equals direct API responses for randomized filters", async () => {
    const api = new ApiClient(BASE!);
    const devices = await api.devices();
    expect(devices.length).toBeGreaterThan(0);
    const deviceId = devices[0].device_id;
    let seed = 1234;
    const rand = () => {
      seed = (seed * 1103515245 + 12345) % 2 ** 31;
      return seed / 2 ** 31;
    };
    const classes = ["Walking", "Running", "Resting", "NoActivity"] as const;
    for (let i = 0; i < 10; i++) {
      const filter: HistoryFilter = {};
      if (rand() < 0.7) filter.t_start = Math.floor(rand() * 100);
      if (rand() < 0.7) filter.t_end = Math.floor(rand() * 200) + 5;
      if (rand() < 0.5) filter.activity_class = classes[Math.floor(rand() * 4)];
      const viaClient = await api.history(deviceId, filter);
      const direct = await (
        await fetch(
          `${BASE}/api/devices/${deviceId}/history` +
            buildQuery({
              t_start: filter.t_start,
              t_end: filter.t_end,
              activity_class: filter.activity_class,
            }),
        )
      ).json();
      expect(viaClient).toEqual(direct);
    }
  });

  it("alert list endpoint answers", async () => {
    const api = new ApiClient(BASE!);
    const alerts = await api.alerts({});
    expect(Array.isArray(alerts)).toBe(true);
  });
});
