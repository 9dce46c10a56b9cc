// Typed client for the scheduling service. All console traffic goes
// through this module.

import type {
  AgentsDoc,
  CreateSessionRequest,
  ErrorBody,
  HealthDoc,
  ObservationEntry,
  ScheduleDoc,
  SessionSummary,
} from "./types.js";

export class ApiError extends Error {
  constructor(readonly status: number, readonly body: ErrorBody) {
    super(body.error || `request failed with status ${status}`);
    this.name = "ApiError";
  }
}

export function newIdempotencyKey(): string {
  const c = globalThis.crypto;
  if (c && typeof c.randomUUID === "function") return c.randomUUID();
  return `key-${Date.now().toString(16)}-${Math.random().toString(16).slice(2)}`;
}

export class Client {
  constructor(readonly base: string = "") {}

  private async send<T>(
    method: string,
    path: string,
    body?: unknown,
    headers?: Record<string, string>,
  ): Promise<T> {
    const init: RequestInit = { method, headers: { ...headers } };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json", ...headers };
      init.body = JSON.stringify(body);
    }
    const resp = await fetch(this.base + path, init);
    const text = await resp.text();
    const data = text ? JSON.parse(text) : {};
    if (!resp.ok) throw new ApiError(resp.status, data as ErrorBody);
    return data as T;
  }

  health(): Promise<HealthDoc> {
    return this.send("GET", "/health");
  }

  createSession(req: CreateSessionRequest): Promise<SessionSummary> {
    return this.send("POST", "/sessions", req);
  }

  schedule(sessionId: string): Promise<ScheduleDoc> {
    return this.send("GET", `/sessions/${sessionId}/schedule`);
  }

  agents(sessionId: string): Promise<AgentsDoc> {
    return this.send("GET", `/sessions/${sessionId}/agents`);
  }

  /**
   * Post one round of observed durations.
   *
   * A network failure is retried once with the same idempotency key: if the
   * first request actually reached the service, the retry returns the stored
   * response instead of applying the round twice. HTTP-level errors are not
   * retried; the service already answered.
   */
  async submitRound(
    sessionId: string,
    round: number,
    observations: ObservationEntry[],
    key: string = newIdempotencyKey(),
  ): Promise<SessionSummary> {
    const body = { round, observations };
    const headers = { "Idempotency-Key": key };
    const path = `/sessions/${sessionId}/observations`;
    try {
      return await this.send<SessionSummary>("POST", path, body, headers);
    } catch (err) {
      if (err instanceof ApiError) throw err;
      return await this.send<SessionSummary>("POST", path, body, headers);
    }
  }
}
