/** Typed client for the study service's versioned JSON API. */

export const API_VERSION = 1;

/** Number of anonymized candidates shown per question. */
export const CANDIDATE_COUNT = 6;

export interface Candidate {
  /** Opaque per-question id, e.g. "c3". Carries no model identity. */
  id: string;
  /** Image endpoint for this candidate. */
  url: string;
}

export interface Progress {
  answered: number;
  total: number;
}

export interface QuestionView {
  question: string;
  inputUrl: string;
  truthUrl: string;
  candidates: Candidate[];
  progress: Progress;
}

export interface SessionInfo {
  session: string;
  questions: number;
}

export interface VoteReceipt {
  duplicate: boolean;
}

export interface StatsRow {
  model: string;
  count: number;
  percentage: number;
}

export interface Stats {
  total: number;
  models: StatsRow[];
}

/** Minimal structural view of a fetch response, so tests run without a DOM. */
export interface HttpResponse {
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}

export type HttpFetch = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<HttpResponse>;

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

function asRecord(value: unknown, context: string): Record<string, unknown> {
  if (typeof value !== "object" || value === null || Array.isArray(value)) {
    throw new Error(`${context}: expected a JSON object`);
  }
  return value as Record<string, unknown>;
}

function requireVersion(body: Record<string, unknown>, context: string): void {
  if (body["v"] !== API_VERSION) {
    throw new Error(`${context}: unsupported payload version ${String(body["v"])}`);
  }
}

function requireString(body: Record<string, unknown>, key: string, context: string): string {
  const value = body[key];
  if (typeof value !== "string") {
    throw new Error(`${context}: missing string field "${key}"`);
  }
  return value;
}

function requireNumber(body: Record<string, unknown>, key: string, context: string): number {
  const value = body[key];
  if (typeof value !== "number" || !Number.isFinite(value)) {
    throw new Error(`${context}: missing numeric field "${key}"`);
  }
  return value;
}

function parseQuestion(body: Record<string, unknown>): QuestionView {
  const context = "question payload";
  const rawCandidates = body["candidates"];
  if (!Array.isArray(rawCandidates)) {
    throw new Error(`${context}: missing candidate list`);
  }
  if (rawCandidates.length !== CANDIDATE_COUNT) {
    throw new Error(
      `${context}: expected ${CANDIDATE_COUNT} candidates, got ${rawCandidates.length}`,
    );
  }
  const candidates = rawCandidates.map((entry, index) => {
    const record = asRecord(entry, `${context} candidate ${index}`);
    return {
      id: requireString(record, "id", context),
      url: requireString(record, "url", context),
    };
  });
  const progress = asRecord(body["progress"], `${context} progress`);
  return {
    question: requireString(body, "question", context),
    inputUrl: requireString(body, "input_url", context),
    truthUrl: requireString(body, "truth_url", context),
    candidates,
    progress: {
      answered: requireNumber(progress, "answered", context),
      total: requireNumber(progress, "total", context),
    },
  };
}

function parseStats(body: Record<string, unknown>): Stats {
  const context = "stats payload";
  const rawModels = body["models"];
  if (!Array.isArray(rawModels)) {
    throw new Error(`${context}: missing model list`);
  }
  const models = rawModels.map((entry, index) => {
    const record = asRecord(entry, `${context} row ${index}`);
    return {
      model: requireString(record, "model", context),
      count: requireNumber(record, "count", context),
      percentage: requireNumber(record, "percentage", context),
    };
  });
  return { total: requireNumber(body, "total", context), models };
}

export class ApiClient {
  private readonly fetchFn: HttpFetch;
  private readonly base: string;

  constructor(fetchFn: HttpFetch, base = "") {
    this.fetchFn = fetchFn;
    this.base = base.replace(/\/$/, "");
  }

  private async request(
    path: string,
    init?: { method?: string; body?: unknown },
  ): Promise<Record<string, unknown>> {
    const options =
      init?.body === undefined
        ? { method: init?.method }
        : {
            method: init.method,
            headers: { "content-type": "application/json" },
            body: JSON.stringify(init.body),
          };
    const response = await this.fetchFn(this.base + path, options);
    const payload = await response.json().catch(() => null);
    if (!response.ok) {
      let detail = `request failed with status ${response.status}`;
      if (payload !== null && typeof payload === "object") {
        const record = payload as Record<string, unknown>;
        if (typeof record["detail"] === "string") {
          detail = record["detail"];
        }
      }
      throw new ApiError(response.status, detail);
    }
    const body = asRecord(payload, path);
    requireVersion(body, path);
    return body;
  }

  async createSession(): Promise<SessionInfo> {
    const body = await this.request("/api/session", { method: "POST", body: {} });
    return {
      session: requireString(body, "session", "session payload"),
      questions: requireNumber(body, "questions", "session payload"),
    };
  }

  /** Fetch the next open question, or null once the session is complete. */
  async nextQuestion(session: string): Promise<QuestionView | null> {
    const body = await this.request(`/api/question?session=${encodeURIComponent(session)}`);
    if (body["complete"] === true) {
      return null;
    }
    return parseQuestion(body);
  }

  async submitVote(session: string, question: string, choice: string): Promise<VoteReceipt> {
    const body = await this.request("/api/vote", {
      method: "POST",
      body: { session, question, choice },
    });
    return { duplicate: body["duplicate"] === true };
  }

  async stats(): Promise<Stats> {
    const body = await this.request("/api/stats");
    return parseStats(body);
  }
}
