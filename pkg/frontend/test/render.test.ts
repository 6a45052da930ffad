// Contract tests: rendered output reflects the API payload and nothing
// else. The fixtures mirror the server's JSON shapes byte for byte.

import { describe, expect, it } from "vitest";

import {
  renderConflicts,
  renderDashboard,
  renderPolicyList,
  renderRules,
  renderSettings,
  stateBadge,
} from "../src/render.js";
import type { ConflictReport, DeviceStatus, RuleDict } from "../src/types.js";

function device(overrides: Partial<DeviceStatus>): DeviceStatus {
  return {
    mac: "02:00:00:00:00:01",
    ip: "10.0.0.10",
    mud_url: "https://mfs.example/bulb",
    state: "active",
    stale: false,
    rule_count: 3,
    provenance_counts: { manufacturer: 2, admin: 1 },
    conflict_count: 0,
    merge_mode: "union",
    cache_expires_at: null,
    latency: {
      t_fetch_ms: 400, t_verify_ms: 2, t_install_ms: 1,
      t_ups_ms: 12, total_ms: 415,
    },
    warnings: [],
    ...overrides,
  };
}

function rule(overrides: Partial<RuleDict>): RuleDict {
  return {
    device_mac: "02:00:00:00:00:01",
    device_ip: "10.0.0.10",
    direction: "egress",
    remote: "192.0.2.1/32",
    protocol: "tcp",
    remote_port: [443, 443],
    device_port: null,
    initiated_by: null,
    action: "accept",
    provenance: "manufacturer",
    source_ace: "cl0",
    ...overrides,
  };
}

describe("dashboard", () => {
  it("renders the empty state", () => {
    expect(renderDashboard([])).toContain("No devices seen yet");
  });

  it("renders one row per device with payload values only", () => {
    const devices = Array.from({ length: 16 }, (_, i) =>
      device({ mac: `02:00:00:00:00:${i.toString(16).padStart(2, "0")}` }));
    const html = renderDashboard(devices);
    expect(html.match(/<tr data-mac=/g)).toHaveLength(16);
    for (const d of devices) expect(html).toContain(d.mac);
  });

  it("shows provenance counts straight from the payload", () => {
    const html = renderDashboard([
      device({ provenance_counts: { manufacturer: 5, admin: 2 } }),
    ]);
    expect(html).toContain("5 / 2");
  });

  it("marks quarantined devices with a warning badge", () => {
    const html = renderDashboard([device({ state: "quarantined" })]);
    expect(html).toContain("badge-quarantined");
  });

  it("adds a stale badge when flagged", () => {
    expect(stateBadge(device({ stale: true }))).toContain("badge-stale");
    expect(stateBadge(device({}))).not.toContain("badge-stale");
  });

  it("escapes payload text", () => {
    const html = renderDashboard([device({ ip: "<script>alert(1)</script>" })]);
    expect(html).not.toContain("<script>alert");
  });
});

describe("rules view", () => {
  it("shows emitted lines verbatim", () => {
    const lines = [
      "filter FORWARD -s 10.0.0.10/32 -d 192.0.2.1/32 -p tcp --dport 443:443 -j ACCEPT # manufacturer/cl0",
      "filter FORWARD -s 10.0.0.10/32 -d 0.0.0.0/0 -p any -j DROP # default/deny-egress",
    ];
    const html = renderRules(lines);
    for (const line of lines) expect(html).toContain(line.replace(/</g, "&lt;"));
  });

  it("renders the empty state", () => {
    expect(renderRules([])).toContain("No installed rules");
  });
});

describe("conflict viewer", () => {
  const hostA = rule({ remote: "192.0.2.1/32", source_ace: "to-a" });
  const hostAAdmin = rule({
    remote: "192.0.2.1/32", provenance: "admin", source_ace: "adm-a",
  });
  const abcReport: ConflictReport = {
    entries: [
      { kind: "duplicate", manufacturer_rule: hostA, admin_rule: hostAAdmin },
      {
        kind: "manufacturer_only",
        manufacturer_rule: rule({ remote: "192.0.2.2/32", source_ace: "to-b" }),
        admin_rule: null,
      },
      {
        kind: "admin_only",
        manufacturer_rule: null,
        admin_rule: rule({
          remote: "192.0.2.3/32", provenance: "admin", source_ace: "adm-c",
        }),
      },
    ],
  };

  it("renders the A/B/C scenario with one row per entry", () => {
    const html = renderConflicts(abcReport);
    expect(html.match(/conflict-duplicate/g)).toHaveLength(1);
    expect(html.match(/conflict-manufacturer_only/g)).toHaveLength(1);
    expect(html.match(/conflict-admin_only/g)).toHaveLength(1);
    expect(html).toContain("192.0.2.1/32");
    expect(html).toContain("192.0.2.2/32");
    expect(html).toContain("192.0.2.3/32");
    expect(html).toContain("prov-admin");
    expect(html).toContain("prov-manufacturer");
  });

  it("renders the empty report", () => {
    expect(renderConflicts({ entries: [] })).toContain("No conflicts");
  });

  it("makes action clashes prominent", () => {
    const html = renderConflicts({
      entries: [{
        kind: "action_clash",
        manufacturer_rule: hostA,
        admin_rule: rule({
          remote: "192.0.2.1/32", provenance: "admin", action: "drop",
        }),
      }],
    });
    expect(html).toContain("conflict-clash");
    expect(html).toContain("#9888"); // warning sign
  });
});

describe("policies and settings", () => {
  it("lists stored policies", () => {
    const html = renderPolicyList([
      {
        mac: "02:00:00:00:00:01", filename: "020000000001.json",
        has_draft: true, published: false,
        updated_at: "2026-01-01T00:00:00Z", author: "alice",
      },
    ]);
    expect(html).toContain("02:00:00:00:00:01");
    expect(html).toContain("unpublished");
    expect(html).toContain("alice");
  });

  it("renders the unset merge mode", () => {
    expect(renderSettings(null)).toContain("unset");
    expect(renderSettings("admin_priority")).toContain("admin_priority");
  });
});
