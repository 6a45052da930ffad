// Pure HTML renderers. Every value shown comes straight from an API
// payload; these functions never compute policy.

import type { AceForm } from "./policy.js";
import type {
  ConflictEntry,
  ConflictReport,
  DeviceStatus,
  MergeMode,
  PolicySummary,
  RuleDict,
} from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function stateBadge(device: DeviceStatus): string {
  const labels: string[] = [device.state];
  if (device.stale) labels.push("stale");
  return labels
    .map(
      (label) =>
        `<span class="badge badge-${escapeHtml(label)}">${escapeHtml(label)}</span>`,
    )
    .join(" ");
}

export function renderDashboard(devices: DeviceStatus[]): string {
  if (devices.length === 0) {
    return `<div class="empty">No devices seen yet. Waiting for joins.</div>`;
  }
  const rows = devices
    .map((d) => {
      const latency = d.latency.total_ms.toFixed(0);
      return `<tr data-mac="${escapeHtml(d.mac)}">
<td><a href="#/device/${escapeHtml(d.mac)}">${escapeHtml(d.mac)}</a></td>
<td>${escapeHtml(d.ip ?? "-")}</td>
<td>${stateBadge(d)}</td>
<td>${d.rule_count}</td>
<td>${d.provenance_counts.manufacturer} / ${d.provenance_counts.admin}</td>
<td>${d.conflict_count}</td>
<td>${latency} ms</td>
<td><a href="#/edit/${escapeHtml(d.mac)}">edit policy</a></td>
</tr>`;
    })
    .join("\n");
  return `<table class="devices">
<thead><tr><th>MAC</th><th>IP</th><th>state</th><th>rules</th>
<th>mfr / admin</th><th>conflicts</th><th>setup time</th><th></th></tr></thead>
<tbody>${rows}</tbody></table>`;
}

export function renderRules(lines: string[]): string {
  if (lines.length === 0) return `<div class="empty">No installed rules.</div>`;
  return `<pre class="rules">${lines.map(escapeHtml).join("\n")}</pre>`;
}

function ruleCell(rule: RuleDict | null): string {
  if (rule === null) return `<td class="absent">-</td>`;
  const ports = rule.remote_port ? `:${rule.remote_port[0]}-${rule.remote_port[1]}` : "";
  const summary = `${rule.direction} ${rule.remote}${ports} ${rule.protocol} ${rule.action}`;
  return `<td class="prov-${rule.provenance}">${escapeHtml(summary)}
 <span class="ace">(${escapeHtml(rule.source_ace)})</span></td>`;
}

export function renderConflicts(report: ConflictReport): string {
  if (report.entries.length === 0) {
    return `<div class="empty">No conflicts.</div>`;
  }
  const rows = report.entries
    .map((entry: ConflictEntry) => {
      const cls = entry.kind === "action_clash" ? "clash" : entry.kind;
      return `<tr class="conflict-${cls}">
<td class="kind">${escapeHtml(entry.kind)}${
        entry.kind === "action_clash" ? " &#9888;" : ""
      }</td>
${ruleCell(entry.manufacturer_rule)}
${ruleCell(entry.admin_rule)}
</tr>`;
    })
    .join("\n");
  return `<table class="conflicts">
<thead><tr><th>kind</th><th>manufacturer</th><th>administrator</th></tr></thead>
<tbody>${rows}</tbody></table>`;
}

export function renderPolicyList(entries: PolicySummary[]): string {
  if (entries.length === 0) {
    return `<div class="empty">No administrator policies stored.</div>`;
  }
  const rows = entries
    .map(
      (e) => `<tr>
<td><a href="#/edit/${escapeHtml(e.mac)}">${escapeHtml(e.mac)}</a></td>
<td>${e.has_draft ? "draft" : ""}</td>
<td>${e.published ? "published" : "unpublished"}</td>
<td>${escapeHtml(e.updated_at)}</td>
<td>${escapeHtml(e.author)}</td>
</tr>`,
    )
    .join("\n");
  return `<table class="policies">
<thead><tr><th>MAC</th><th>draft</th><th>status</th><th>updated</th><th>author</th></tr></thead>
<tbody>${rows}</tbody></table>`;
}

const PROTO_OPTIONS: AceForm["protocol"][] = ["tcp", "udp", "icmp", ""];

function selectField(
  name: string,
  index: number,
  value: string,
  options: [string, string][],
): string {
  const opts = options
    .map(
      ([v, label]) =>
        `<option value="${escapeHtml(v)}"${v === value ? " selected" : ""}>${escapeHtml(label)}</option>`,
    )
    .join("");
  return `<select name="${name}-${index}" data-field="${name}" data-index="${index}">${opts}</select>`;
}

function textField(
  name: string,
  index: number,
  value: string,
  placeholder: string,
): string {
  return `<input name="${name}-${index}" data-field="${name}" data-index="${index}"
 value="${escapeHtml(value)}" placeholder="${escapeHtml(placeholder)}">`;
}

export function renderAceRow(ace: AceForm, index: number): string {
  return `<fieldset class="ace" data-index="${index}">
<legend>rule ${index + 1}</legend>
<label>name ${textField("name", index, ace.name, "allow-streaming")}</label>
<label>direction ${selectField("direction", index, ace.direction, [
    ["egress", "device to remote (egress)"],
    ["ingress", "remote to device (ingress)"],
  ])}</label>
<label>remote ${selectField("remoteKind", index, ace.remoteKind, [
    ["cidr", "IPv4 / CIDR"],
    ["dnsname", "DNS name"],
  ])} ${textField("remoteValue", index, ace.remoteValue, "192.0.2.10 or host.example")}</label>
<label>protocol ${selectField("protocol", index, ace.protocol, [
    ["tcp", "tcp"],
    ["udp", "udp"],
    ["icmp", "icmp"],
    ["", "any"],
  ])}</label>
<label>remote port ${textField("remotePort", index, ace.remotePort, "443 or 400-500")}</label>
<label>device port ${textField("devicePort", index, ace.devicePort, "")}</label>
<label>initiated ${selectField("initiated", index, ace.initiated, [
    ["", "either side"],
    ["from-device", "by the device"],
    ["to-device", "by the remote"],
  ])}</label>
<label>action ${selectField("action", index, ace.action, [
    ["accept", "accept"],
    ["drop", "drop"],
  ])}</label>
<button type="button" data-remove="${index}">remove</button>
</fieldset>`;
}

export function renderEditor(
  mac: string,
  aces: AceForm[],
  errors: string[],
  status: { published: boolean; updated_at: string } | null,
): string {
  const errorList = errors.length
    ? `<ul class="errors">${errors
        .map((e) => `<li>${escapeHtml(e)}</li>`)
        .join("")}</ul>`
    : "";
  const meta = status
    ? `<p class="meta">${status.published ? "published" : "unpublished"},
 updated ${escapeHtml(status.updated_at)}</p>`
    : `<p class="meta">new policy</p>`;
  const rows = aces.map((ace, i) => renderAceRow(ace, i)).join("\n");
  const publishDisabled = status === null ? " disabled" : "";
  return `<section class="editor">
<h2>Policy for ${escapeHtml(mac)}</h2>
${meta}
${errorList}
<form id="policy-form">
${rows}
<div class="actions">
<button type="button" id="add-ace">add rule</button>
<button type="button" id="save-draft">save draft</button>
<button type="button" id="publish"${publishDisabled}>publish</button>
</div>
</form>
</section>`;
}

export function renderSettings(mode: MergeMode | null): string {
  const current = mode ?? "unset (manager config applies)";
  return `<section class="settings">
<h2>Merge mode</h2>
<p>current: <strong>${escapeHtml(current)}</strong></p>
<button type="button" data-mode="union">union</button>
<button type="button" data-mode="admin_priority">admin priority</button>
<p class="hint">union lets a device do whatever either file allows;
admin priority replaces the manufacturer profile with yours.</p>
</section>`;
}

export function renderLogin(message: string): string {
  return `<section class="login">
<h2>Administrator sign-in</h2>
<p>${escapeHtml(message)}</p>
<input id="token" type="password" placeholder="admin token">
<button type="button" id="login">sign in</button>
</section>`;
}

export function renderBanner(message: string): string {
  return `<div class="banner">${escapeHtml(message)}</div>`;
}
