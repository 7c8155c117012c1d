import type { EvalReport, HealthInfo, QueryResult, RunStarted } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Error body from the service; every error carries a machine-readable kind. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly kind: string,
    public readonly body: Record<string, unknown>,
  ) {
    super(`${status} ${kind}`);
    this.name = "ApiError";
  }
}

async function raiseForStatus(response: Response): Promise<void> {
  if (response.ok) return;
  let body: Record<string, unknown> = {};
  try {
    body = (await response.json()) as Record<string, unknown>;
  } catch {
    // body stays empty for non-JSON errors
  }
  const kind = typeof body.error === "string" ? body.error : "http_error";
  throw new ApiError(response.status, kind, body);
}

export class ApiClient {
  private readonly fetchFn: FetchLike;

  constructor(
    public readonly baseUrl: string = "",
    fetchFn?: FetchLike,
  ) {
    this.fetchFn = fetchFn ?? ((input, init) => globalThis.fetch(input, init));
  }

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path);
    await raiseForStatus(response);
    return (await response.json()) as T;
  }

  private async postJson<T>(path: string, payload: unknown): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    await raiseForStatus(response);
    return (await response.json()) as T;
  }

  health(): Promise<HealthInfo> {
    return this.getJson("/health");
  }

  query(question: string, backend?: string, k?: number): Promise<QueryResult> {
    const payload: Record<string, unknown> = { question };
    if (backend) payload.backend = backend;
    if (k !== undefined) payload.k = k;
    return this.postJson("/api/query", payload);
  }

  runEval(backend: string, seed: number, nBatches?: number, cvesPerBatch?: number): Promise<RunStarted> {
    const payload: Record<string, unknown> = { backend, seed };
    if (nBatches !== undefined) payload.n_batches = nBatches;
    if (cvesPerBatch !== undefined) payload.cves_per_batch = cvesPerBatch;
    return this.postJson("/api/eval/run", payload);
  }

  report(reportId: string): Promise<EvalReport> {
    return this.getJson(`/api/eval/reports/${reportId}`);
  }

  /** Poll until the report exists; 404 report_not_found means still running. */
  async pollReport(
    reportId: string,
    opts: { intervalMs?: number; timeoutMs?: number; sleep?: (ms: number) => Promise<void> } = {},
  ): Promise<EvalReport> {
    const intervalMs = opts.intervalMs ?? 500;
    const timeoutMs = opts.timeoutMs ?? 120_000;
    const sleep = opts.sleep ?? ((ms) => new Promise((resolve) => setTimeout(resolve, ms)));
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      try {
        return await this.report(reportId);
      } catch (err) {
        if (!(err instanceof ApiError) || err.kind !== "report_not_found") throw err;
        if (Date.now() >= deadline) throw err;
      }
      await sleep(intervalMs);
    }
  }
}
