// Typed clients for the two HTTP surfaces the console consumes. fetch is
// injectable so tests can run against a scripted transport.

import type {
  ConflictReport,
  DeviceStatus,
  MergeMode,
  PolicyDetail,
  PolicySummary,
} from "./types.js";

export type FetchLike = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public url: string,
    public body: unknown,
  ) {
    super(`HTTP ${status} for ${url}`);
  }

  get serverMessage(): string {
    if (this.body && typeof this.body === "object" && "error" in this.body) {
      return String((this.body as { error: unknown }).error);
    }
    return this.message;
  }
}

async function request<T>(
  fetchFn: FetchLike,
  url: string,
  init: RequestInit = {},
  parse: "json" | "text" = "json",
): Promise<T> {
  const resp = await fetchFn(url, init);
  if (!resp.ok) {
    let body: unknown = null;
    try {
      body = await resp.json();
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(resp.status, url, body);
  }
  if (parse === "text") {
    return (await resp.text()) as unknown as T;
  }
  return (await resp.json()) as T;
}

export class AdminApi {
  constructor(
    private base: string,
    private token: string,
    private fetchFn: FetchLike = (...args) => globalThis.fetch(...args),
  ) {}

  private headers(extra: Record<string, string> = {}): Record<string, string> {
    return { Authorization: `Bearer ${this.token}`, ...extra };
  }

  listPolicies(): Promise<PolicySummary[]> {
    return request(this.fetchFn, `${this.base}/admin/policies`, {
      headers: this.headers(),
    });
  }

  getPolicy(mac: string): Promise<PolicyDetail> {
    return request(this.fetchFn, `${this.base}/admin/policies/${mac}`, {
      headers: this.headers(),
    });
  }

  putPolicy(
    mac: string,
    doc: Record<string, unknown>,
    opts: { ifMatch?: string; author?: string } = {},
  ): Promise<PolicySummary> {
    const headers = this.headers({ "Content-Type": "application/json" });
    if (opts.ifMatch) headers["If-Match"] = opts.ifMatch;
    if (opts.author) headers["X-Author"] = opts.author;
    return request(this.fetchFn, `${this.base}/admin/policies/${mac}`, {
      method: "PUT",
      headers,
      body: JSON.stringify(doc),
    });
  }

  deletePolicy(mac: string): Promise<{ deleted: boolean }> {
    return request(this.fetchFn, `${this.base}/admin/policies/${mac}`, {
      method: "DELETE",
      headers: this.headers(),
    });
  }

  publish(mac: string): Promise<PolicySummary> {
    return request(this.fetchFn, `${this.base}/admin/policies/${mac}/publish`, {
      method: "POST",
      headers: this.headers(),
    });
  }

  conflicts(mac: string): Promise<ConflictReport> {
    return request(this.fetchFn, `${this.base}/admin/conflicts/${mac}`, {
      headers: this.headers(),
    });
  }

  getMergeMode(): Promise<{ merge_mode: MergeMode | null }> {
    return request(this.fetchFn, `${this.base}/admin/settings/merge-mode`, {
      headers: this.headers(),
    });
  }

  setMergeMode(mode: MergeMode): Promise<{ merge_mode: MergeMode }> {
    return request(this.fetchFn, `${this.base}/admin/settings/merge-mode`, {
      method: "PUT",
      headers: this.headers({ "Content-Type": "application/json" }),
      body: JSON.stringify({ merge_mode: mode }),
    });
  }
}

export class ManagerApi {
  constructor(
    private base: string,
    private fetchFn: FetchLike = (...args) => globalThis.fetch(...args),
  ) {}

  devices(): Promise<DeviceStatus[]> {
    return request(this.fetchFn, `${this.base}/status/devices`);
  }

  device(mac: string): Promise<DeviceStatus> {
    return request(this.fetchFn, `${this.base}/status/devices/${mac}`);
  }

  async rules(mac: string): Promise<string[]> {
    const text = await request<string>(
      this.fetchFn,
      `${this.base}/status/devices/${mac}/rules`,
      {},
      "text",
    );
    return text.split("\n").filter((line) => line.length > 0);
  }

  conflicts(mac: string): Promise<ConflictReport> {
    return request(this.fetchFn, `${this.base}/status/devices/${mac}/conflicts`);
  }
}

export async function fetchUiConfig(
  upsBase: string,
  fetchFn: FetchLike = (...args) => globalThis.fetch(...args),
): Promise<{ manager_status_url: string | null }> {
  return request(fetchFn, `${upsBase}/ui-config`);
}
