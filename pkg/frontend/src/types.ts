// Payload shapes of the manager status API and the UPS admin API. The UI
// performs no policy computation of its own: everything rendered comes from
// these payloads.

export type DeviceState = "pending" | "active" | "quarantined" | "legacy";

export interface LatencySummary {
  t_fetch_ms: number;
  t_verify_ms: number;
  t_install_ms: number;
  t_ups_ms: number;
  total_ms: number;
}

export interface DeviceStatus {
  mac: string;
  ip: string | null;
  mud_url: string | null;
  state: DeviceState;
  stale: boolean;
  rule_count: number;
  provenance_counts: { manufacturer: number; admin: number };
  conflict_count: number;
  merge_mode: string | null;
  cache_expires_at: string | null;
  latency: LatencySummary;
  warnings: string[];
}

export interface RuleDict {
  device_mac: string;
  device_ip: string;
  direction: "egress" | "ingress";
  remote: string;
  protocol: string;
  remote_port: [number, number] | null;
  device_port: [number, number] | null;
  initiated_by: "device" | "remote" | null;
  action: "accept" | "drop";
  provenance: "manufacturer" | "admin";
  source_ace: string;
}

export type ConflictKind =
  | "duplicate"
  | "admin_only"
  | "manufacturer_only"
  | "action_clash";

export interface ConflictEntry {
  kind: ConflictKind;
  manufacturer_rule: RuleDict | null;
  admin_rule: RuleDict | null;
}

export interface ConflictReport {
  entries: ConflictEntry[];
}

export interface PolicySummary {
  mac: string;
  filename: string;
  has_draft: boolean;
  published: boolean;
  updated_at: string;
  author: string;
}

export interface PolicyDetail extends PolicySummary {
  draft: Record<string, unknown> | null;
}

export type MergeMode = "union" | "admin_priority";
