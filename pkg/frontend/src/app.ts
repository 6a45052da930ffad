// Browser bootstrap: hash routing, periodic refresh, form handling. All
// state shown on screen is re-fetched from the APIs; the console never
// derives policy locally.

import { AdminApi, ApiError, fetchUiConfig, ManagerApi } from "./api.js";
import {
  AceForm,
  buildPolicyDocument,
  emptyAce,
  parseDraftDocument,
  validateAce,
} from "./policy.js";
import {
  renderBanner,
  renderConflicts,
  renderDashboard,
  renderEditor,
  renderLogin,
  renderPolicyList,
  renderRules,
  renderSettings,
} from "./render.js";

const REFRESH_MS = 5000;

interface EditorState {
  mac: string;
  aces: AceForm[];
  errors: string[];
  updatedAt: string | null;
  published: boolean;
  exists: boolean;
}

class App {
  private admin: AdminApi | null = null;
  private manager: ManagerApi | null = null;
  private editor: EditorState | null = null;
  private refreshTimer: number | null = null;
  private root: HTMLElement;

  constructor() {
    this.root = document.getElementById("app") as HTMLElement;
    window.addEventListener("hashchange", () => void this.route());
    this.root.addEventListener("click", (ev) => void this.onClick(ev));
    this.root.addEventListener("input", (ev) => this.onInput(ev));
  }

  private token(): string | null {
    return sessionStorage.getItem("admin-token");
  }

  async start(): Promise<void> {
    const upsBase = window.location.origin;
    try {
      const config = await fetchUiConfig(upsBase);
      if (config.manager_status_url) {
        this.manager = new ManagerApi(config.manager_status_url);
      }
    } catch {
      /* manager view degraded; banner shown on dashboard */
    }
    const token = this.token();
    if (token) this.admin = new AdminApi(upsBase, token);
    await this.route();
  }

  private setRefresh(fn: (() => Promise<void>) | null): void {
    if (this.refreshTimer !== null) {
      window.clearInterval(this.refreshTimer);
      this.refreshTimer = null;
    }
    if (fn) {
      this.refreshTimer = window.setInterval(() => void fn(), REFRESH_MS);
    }
  }

  private requireLogin(message = "Enter the UPS admin token."): void {
    this.setRefresh(null);
    this.root.innerHTML = renderLogin(message);
  }

  private async route(): Promise<void> {
    const hash = window.location.hash || "#/";
    try {
      if (hash === "#/" || hash === "") {
        await this.showDashboard();
      } else if (hash.startsWith("#/device/")) {
        await this.showDevice(decodeURIComponent(hash.slice("#/device/".length)));
      } else if (hash.startsWith("#/edit/")) {
        await this.showEditor(decodeURIComponent(hash.slice("#/edit/".length)));
      } else if (hash === "#/policies") {
        await this.showPolicies();
      } else if (hash === "#/settings") {
        await this.showSettings();
      } else {
        this.root.innerHTML = renderBanner(`Unknown view ${hash}`);
      }
    } catch (exc) {
      this.handleError(exc);
    }
  }

  private handleError(exc: unknown): void {
    if (exc instanceof ApiError && exc.status === 401) {
      this.admin = null;
      sessionStorage.removeItem("admin-token");
      this.requireLogin("Token rejected, sign in again.");
      return;
    }
    const message =
      exc instanceof ApiError
        ? `API error: ${exc.serverMessage}`
        : `API unreachable: ${String(exc)}`;
    this.setRefresh(null);
    this.root.innerHTML = renderBanner(message);
  }

  // --- views ---

  private async showDashboard(): Promise<void> {
    if (!this.manager) {
      this.root.innerHTML = renderBanner(
        "Manager status API not configured; set manager_status_url in the UPS config.",
      );
      return;
    }
    const draw = async () => {
      const devices = await this.manager!.devices();
      this.root.innerHTML = `<h2>Devices</h2>` + renderDashboard(devices);
    };
    await draw();
    this.setRefresh(async () => {
      try {
        await draw();
      } catch {
        /* transient refresh errors keep the last view */
      }
    });
  }

  private async showDevice(mac: string): Promise<void> {
    if (!this.manager) {
      this.root.innerHTML = renderBanner("Manager status API not configured.");
      return;
    }
    this.setRefresh(null);
    const [rules, conflicts] = await Promise.all([
      this.manager.rules(mac).catch(() => [] as string[]),
      this.manager.conflicts(mac).catch(() => ({ entries: [] })),
    ]);
    this.root.innerHTML = `<h2>${mac}</h2>
<h3>Installed rules</h3>${renderRules(rules)}
<h3>Conflicts</h3>${renderConflicts(conflicts)}
<p><a href="#/edit/${mac}">edit policy</a> | <a href="#/">back</a></p>`;
  }

  private async showPolicies(): Promise<void> {
    if (!this.admin) return this.requireLogin();
    this.setRefresh(null);
    const entries = await this.admin.listPolicies();
    this.root.innerHTML = `<h2>Administrator policies</h2>` +
      renderPolicyList(entries);
  }

  private async showSettings(): Promise<void> {
    if (!this.admin) return this.requireLogin();
    this.setRefresh(null);
    const { merge_mode } = await this.admin.getMergeMode();
    this.root.innerHTML = renderSettings(merge_mode);
  }

  private async showEditor(mac: string): Promise<void> {
    if (!this.admin) return this.requireLogin();
    this.setRefresh(null);
    let aces: AceForm[] = [emptyAce()];
    let updatedAt: string | null = null;
    let published = false;
    let exists = false;
    try {
      const detail = await this.admin.getPolicy(mac);
      exists = true;
      updatedAt = detail.updated_at;
      published = detail.published;
      if (detail.draft) aces = parseDraftDocument(detail.draft);
    } catch (exc) {
      if (!(exc instanceof ApiError && exc.status === 404)) throw exc;
    }
    this.editor = { mac, aces, errors: [], updatedAt, published, exists };
    this.drawEditor();
  }

  private drawEditor(): void {
    const e = this.editor;
    if (!e) return;
    this.root.innerHTML = renderEditor(
      e.mac,
      e.aces,
      e.errors,
      e.exists ? { published: e.published, updated_at: e.updatedAt ?? "" } : null,
    );
  }

  // --- event plumbing ---

  private onInput(ev: Event): void {
    const target = ev.target as HTMLInputElement | HTMLSelectElement;
    const field = target.dataset["field"];
    const index = Number(target.dataset["index"]);
    if (!this.editor || !field || Number.isNaN(index)) return;
    const ace = this.editor.aces[index];
    if (!ace) return;
    (ace as unknown as Record<string, string>)[field] = target.value;
  }

  private async onClick(ev: Event): Promise<void> {
    const target = ev.target as HTMLElement;
    try {
      if (target.id === "login") {
        const input = document.getElementById("token") as HTMLInputElement;
        sessionStorage.setItem("admin-token", input.value.trim());
        this.admin = new AdminApi(window.location.origin, input.value.trim());
        await this.route();
      } else if (target.id === "add-ace" && this.editor) {
        this.editor.aces.push(emptyAce());
        this.drawEditor();
      } else if (target.dataset["remove"] !== undefined && this.editor) {
        this.editor.aces.splice(Number(target.dataset["remove"]), 1);
        this.drawEditor();
      } else if (target.id === "save-draft" && this.editor) {
        await this.saveDraft(false);
      } else if (target.id === "publish" && this.editor) {
        await this.publish();
      } else if (target.dataset["mode"]) {
        if (!this.admin) return this.requireLogin();
        await this.admin.setMergeMode(
          target.dataset["mode"] as "union" | "admin_priority",
        );
        await this.showSettings();
      }
    } catch (exc) {
      if (this.editor && exc instanceof ApiError && exc.status === 422) {
        this.editor.errors = [exc.serverMessage];
        this.drawEditor();
        return;
      }
      this.handleError(exc);
    }
  }

  private async saveDraft(silent: boolean): Promise<boolean> {
    const e = this.editor;
    if (!e || !this.admin) return false;
    e.errors = e.aces.flatMap((ace, i) =>
      validateAce(ace).map((msg) => `rule ${i + 1} ${msg}`),
    );
    if (e.errors.length) {
      this.drawEditor();
      return false;
    }
    const doc = buildPolicyDocument(e.mac, e.aces);
    const summary = await this.admin.putPolicy(e.mac, doc, {
      ifMatch: e.updatedAt ?? undefined,
      author: "console",
    });
    e.exists = true;
    e.updatedAt = summary.updated_at;
    e.published = summary.published;
    if (!silent) this.drawEditor();
    return true;
  }

  private async publish(): Promise<void> {
    const e = this.editor;
    if (!e || !this.admin) return;
    if (!(await this.saveDraft(true))) return;
    const summary = await this.admin.publish(e.mac);
    e.published = summary.published;
    e.updatedAt = summary.updated_at;
    this.drawEditor();
  }
}

new App().start();
