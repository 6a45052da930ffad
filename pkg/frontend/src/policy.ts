// Form model for the policy editor, mapped 1:1 onto the UPS file schema.
// The wire layout mirrors the server's parser: from-device access lists put
// the remote endpoint on the destination side, to-device lists on the
// source side.

export interface AceForm {
  name: string;
  direction: "egress" | "ingress";
  remoteKind: "cidr" | "dnsname";
  remoteValue: string;
  protocol: "" | "tcp" | "udp" | "icmp"; // "" means any protocol
  remotePort: string; // "", "443" or "400-500"
  devicePort: string;
  initiated: "" | "from-device" | "to-device";
  action: "accept" | "drop";
}

export function emptyAce(): AceForm {
  return {
    name: "",
    direction: "egress",
    remoteKind: "cidr",
    remoteValue: "",
    protocol: "tcp",
    remotePort: "",
    devicePort: "",
    initiated: "",
    action: "accept",
  };
}

const PROTO_NUMBER: Record<string, number> = { tcp: 6, udp: 17, icmp: 1 };
const PROTO_NAME: Record<number, AceForm["protocol"]> = {
  6: "tcp",
  17: "udp",
  1: "icmp",
};

const CIDR_RE = /^(\d{1,3})\.(\d{1,3})\.(\d{1,3})\.(\d{1,3})(\/\d{1,2})?$/;

export function parsePortField(text: string): [number, number] | null {
  const trimmed = text.trim();
  if (!trimmed) return null;
  const match = /^(\d+)(?:\s*-\s*(\d+))?$/.exec(trimmed);
  if (!match) throw new Error(`cannot parse port ${JSON.stringify(text)}`);
  const lo = Number(match[1]);
  const hi = match[2] ? Number(match[2]) : lo;
  if (lo < 1 || hi > 65535 || lo > hi) {
    throw new Error(`port range ${lo}-${hi} out of bounds`);
  }
  return [lo, hi];
}

export function validateAce(form: AceForm): string[] {
  const errors: string[] = [];
  if (!form.name.trim()) errors.push("name: required");
  if (!form.remoteValue.trim()) {
    errors.push("remote: required");
  } else if (form.remoteKind === "cidr") {
    const match = CIDR_RE.exec(form.remoteValue.trim());
    const octetsOk =
      match !== null &&
      [match[1], match[2], match[3], match[4]].every(
        (o) => Number(o) <= 255,
      ) &&
      (match[5] === undefined || Number(match[5].slice(1)) <= 32);
    if (!octetsOk) errors.push("remote: not an IPv4 address or CIDR");
  }
  for (const [label, value] of [
    ["remote port", form.remotePort],
    ["device port", form.devicePort],
  ] as const) {
    if (!value.trim()) continue;
    if (form.protocol !== "tcp" && form.protocol !== "udp") {
      errors.push(`${label}: ports need protocol tcp or udp`);
      continue;
    }
    try {
      parsePortField(value);
    } catch (exc) {
      errors.push(`${label}: ${(exc as Error).message}`);
    }
  }
  if (form.initiated && form.protocol !== "tcp") {
    errors.push("initiated: only valid for tcp");
  }
  return errors;
}

function portNode(range: [number, number]): Record<string, number> {
  return { "lower-port": range[0], "upper-port": range[1] };
}

function aceToWire(form: AceForm): Record<string, unknown> {
  const remoteSide = form.direction === "egress" ? "dst" : "src";
  const matches: Record<string, unknown> = {};
  const ipv4: Record<string, unknown> = {};
  if (form.protocol) ipv4["protocol"] = PROTO_NUMBER[form.protocol];
  if (form.remoteKind === "dnsname") {
    ipv4[`ietf-acldns:${remoteSide}-dnsname`] = form.remoteValue.trim();
  } else {
    const key =
      remoteSide === "dst" ? "destination-ipv4-network" : "source-ipv4-network";
    let value = form.remoteValue.trim();
    if (!value.includes("/")) value += "/32";
    ipv4[key] = value;
  }
  matches["ipv4"] = ipv4;
  if (form.protocol === "tcp" || form.protocol === "udp") {
    const sub: Record<string, unknown> = {};
    const remotePort = parsePortField(form.remotePort);
    const devicePort = parsePortField(form.devicePort);
    const srcPort = remoteSide === "dst" ? devicePort : remotePort;
    const dstPort = remoteSide === "dst" ? remotePort : devicePort;
    if (srcPort) sub["source-port"] = portNode(srcPort);
    if (dstPort) sub["destination-port"] = portNode(dstPort);
    if (form.protocol === "tcp" && form.initiated) {
      sub["ietf-mud:direction-initiated"] = form.initiated;
    }
    if (Object.keys(sub).length) matches[form.protocol] = sub;
  }
  return {
    name: form.name.trim(),
    matches,
    actions: { forwarding: form.action },
  };
}

export function buildPolicyDocument(
  mac: string,
  aces: AceForm[],
  now: Date = new Date(),
): Record<string, unknown> {
  const egress = aces.filter((a) => a.direction === "egress");
  const ingress = aces.filter((a) => a.direction === "ingress");
  const acl: Record<string, unknown>[] = [];
  const policyList = (names: string[]) => ({
    "access-lists": { "access-list": names.map((n) => ({ name: n })) },
  });
  if (egress.length) {
    acl.push({
      name: "ups-fr",
      type: "ipv4-acl-type",
      aces: { ace: egress.map(aceToWire) },
    });
  }
  if (ingress.length) {
    acl.push({
      name: "ups-to",
      type: "ipv4-acl-type",
      aces: { ace: ingress.map(aceToWire) },
    });
  }
  const stem = mac.toLowerCase().replace(/[:.-]/g, "");
  return {
    "ietf-mud:mud": {
      "mud-version": 1,
      "mud-url": `https://ups.invalid/${stem}.json`,
      "last-update": now.toISOString().replace(/\.\d{3}Z$/, "Z"),
      "cache-validity": 48,
      "is-supported": true,
      systeminfo: `administrator policy for ${mac}`,
      "from-device-policy": policyList(egress.length ? ["ups-fr"] : []),
      "to-device-policy": policyList(ingress.length ? ["ups-to"] : []),
    },
    "ietf-access-control-list:acls": { acl },
  };
}

// --- inverse mapping, for editing an existing draft ---

function wirePort(node: unknown): string {
  if (!node || typeof node !== "object") return "";
  const obj = node as Record<string, unknown>;
  if ("port" in obj) return String(obj["port"]);
  const lo = obj["lower-port"];
  const hi = obj["upper-port"] ?? lo;
  return lo === hi ? String(lo) : `${lo}-${hi}`;
}

export function parseDraftDocument(
  doc: Record<string, unknown>,
): AceForm[] {
  const mud = (doc["ietf-mud:mud"] ?? {}) as Record<string, unknown>;
  const aclRoot = (doc["ietf-access-control-list:acls"] ?? {}) as Record<
    string,
    unknown
  >;
  const aclList = (aclRoot["acl"] ?? []) as Record<string, unknown>[];
  const namesOf = (node: unknown): string[] => {
    const lists = ((node ?? {}) as Record<string, unknown>)["access-lists"];
    const entries = ((lists ?? {}) as Record<string, unknown>)["access-list"];
    return ((entries ?? []) as { name: string }[]).map((e) => e.name);
  };
  const egressAcls = new Set(namesOf(mud["from-device-policy"]));
  const forms: AceForm[] = [];
  for (const acl of aclList) {
    const direction = egressAcls.has(String(acl["name"])) ? "egress" : "ingress";
    const remoteSide = direction === "egress" ? "dst" : "src";
    const aces = (((acl["aces"] ?? {}) as Record<string, unknown>)["ace"] ??
      []) as Record<string, unknown>[];
    for (const ace of aces) {
      const matches = (ace["matches"] ?? {}) as Record<string, unknown>;
      const ipv4 = (matches["ipv4"] ?? {}) as Record<string, unknown>;
      const form = emptyAce();
      form.name = String(ace["name"] ?? "");
      form.direction = direction;
      const protoNum = ipv4["protocol"];
      form.protocol =
        typeof protoNum === "number" ? (PROTO_NAME[protoNum] ?? "") : "";
      const dns = ipv4[`ietf-acldns:${remoteSide}-dnsname`];
      const net =
        ipv4[
          remoteSide === "dst"
            ? "destination-ipv4-network"
            : "source-ipv4-network"
        ];
      if (typeof dns === "string") {
        form.remoteKind = "dnsname";
        form.remoteValue = dns;
      } else if (typeof net === "string") {
        form.remoteKind = "cidr";
        form.remoteValue = net;
      }
      const sub = (matches[form.protocol] ?? {}) as Record<string, unknown>;
      const srcPort = wirePort(sub["source-port"]);
      const dstPort = wirePort(sub["destination-port"]);
      form.remotePort = remoteSide === "dst" ? dstPort : srcPort;
      form.devicePort = remoteSide === "dst" ? srcPort : dstPort;
      const initiated = sub["ietf-mud:direction-initiated"];
      if (initiated === "from-device" || initiated === "to-device") {
        form.initiated = initiated;
      }
      const actions = (ace["actions"] ?? {}) as Record<string, unknown>;
      form.action = actions["forwarding"] === "drop" ? "drop" : "accept";
      forms.push(form);
    }
  }
  return forms;
}
