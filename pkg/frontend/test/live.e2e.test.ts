// The console flow against the real control plane: spawns the Python stack
// (stub MFS + UPS + manager), authors and publishes a policy through the
// console's own API layer, and checks that the dashboard, rule view and
// conflict viewer render what the live APIs report.

import { spawn, type ChildProcess } from "node:child_process";
import { createInterface } from "node:readline";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { AdminApi, ManagerApi } from "../src/api.js";
import { buildPolicyDocument, emptyAce } from "../src/policy.js";
import {
  renderConflicts,
  renderDashboard,
  renderRules,
} from "../src/render.js";

const SCRIPT = fileURLToPath(new URL("../scripts/live_stack.py", import.meta.url));

interface StackInfo {
  ups_base: string;
  manager_base: string;
  token: string;
  mac: string;
}

let child: ChildProcess;
let stack: StackInfo;
let lines: AsyncIterableIterator<string>;

async function nextLine(): Promise<string> {
  const { value, done } = await lines.next();
  if (done) throw new Error("live stack exited early");
  return value;
}

beforeAll(async () => {
  child = spawn("python3", [SCRIPT], { stdio: ["pipe", "pipe", "inherit"] });
  lines = createInterface({ input: child.stdout! })[Symbol.asyncIterator]();
  stack = JSON.parse(await nextLine()) as StackInfo;
}, 60000);

afterAll(async () => {
  child.stdin!.write("exit\n");
  await new Promise((resolve) => child.once("close", resolve));
});

describe("console flow against the live stack", () => {
  it("author, publish, observe", async () => {
    const admin = new AdminApi(stack.ups_base, stack.token);
    const manager = new ManagerApi(stack.manager_base);

    // before: manufacturer rules only
    const before = await manager.devices();
    expect(before).toHaveLength(1);
    expect(before[0]!.provenance_counts.admin).toBe(0);

    // author {A, C} in the editor's form model and publish
    const aces = [
      { ...emptyAce(), name: "allow-a", remoteValue: "192.0.2.1/32",
        remotePort: "443" },
      { ...emptyAce(), name: "allow-c", remoteValue: "192.0.2.3/32",
        remotePort: "443" },
    ];
    await admin.putPolicy(stack.mac, buildPolicyDocument(stack.mac, aces), {
      author: "console",
    });
    const published = await admin.publish(stack.mac);
    expect(published.published).toBe(true);

    // the manager re-merges on its next refresh sweep
    child.stdin!.write("refresh\n");
    expect(await nextLine()).toBe("refreshed");

    const devices = await manager.devices();
    const dashboard = renderDashboard(devices);
    expect(devices[0]!.provenance_counts.admin).toBeGreaterThan(0);
    expect(dashboard).toContain("badge-active");

    const ruleLines = await manager.rules(stack.mac);
    const rulesHtml = renderRules(ruleLines);
    expect(rulesHtml).toContain("admin/allow-c");

    // conflict viewer via the UPS proxy renders the A/B/C report
    const report = await admin.conflicts(stack.mac);
    const html = renderConflicts(report);
    expect(html.match(/conflict-duplicate/g)).toHaveLength(1);
    expect(html.match(/conflict-manufacturer_only/g)).toHaveLength(1);
    expect(html.match(/conflict-admin_only/g)).toHaveLength(1);

    // the UI itself is served by the UPS
    const page = await fetch(`${stack.ups_base}/`);
    expect(page.status).toBe(200);
    expect(await page.text()).toContain("mudgate console");
  }, 60000);

  it("serves 401 to a wrong token and the UI handles it as ApiError", async () => {
    const bad = new AdminApi(stack.ups_base, "wrong-token");
    await expect(bad.listPolicies()).rejects.toMatchObject({ status: 401 });
  });
});
