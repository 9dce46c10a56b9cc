// Client behavior against a stubbed fetch: error bodies surface verbatim,
// network failures retry once with the same idempotency key, HTTP errors
// never retry.

import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError, Client, newIdempotencyKey } from "../src/api.js";

const realFetch = globalThis.fetch;

afterEach(() => {
  globalThis.fetch = realFetch;
});

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("newIdempotencyKey", () => {
  it("produces distinct non-trivial keys", () => {
    const a = newIdempotencyKey();
    const b = newIdempotencyKey();
    expect(a).not.toBe(b);
    expect(a.length).toBeGreaterThan(8);
  });
});

describe("Client", () => {
  it("returns parsed documents on success", async () => {
    globalThis.fetch = vi.fn(async (url: RequestInfo | URL) => {
      expect(String(url)).toBe("http://svc/health");
      return jsonResponse(200, { status: "ok", kernel_backend: "compiled" });
    }) as typeof fetch;
    const h = await new Client("http://svc").health();
    expect(h).toEqual({ status: "ok", kernel_backend: "compiled" });
  });

  it("surfaces error bodies verbatim through ApiError", async () => {
    globalThis.fetch = vi.fn(async () =>
      jsonResponse(400, {
        error: "invalid instance",
        violations: [{ code: "tasks", message: "at least one task required" }],
      }),
    ) as typeof fetch;
    const client = new Client("http://svc");
    let caught: unknown;
    try {
      await client.createSession({ instance: {}, strategy: { kind: "exploit", total_rounds: 3 } });
    } catch (err) {
      caught = err;
    }
    expect(caught).toBeInstanceOf(ApiError);
    const e = caught as ApiError;
    expect(e.status).toBe(400);
    expect(e.message).toBe("invalid instance");
    expect(e.body.violations).toEqual([{ code: "tasks", message: "at least one task required" }]);
  });

  it("does not retry when the service answered with an error", async () => {
    const fn = vi.fn(async () => jsonResponse(409, { error: "round mismatch", expected_round: 2 }));
    globalThis.fetch = fn as unknown as typeof fetch;
    const client = new Client("http://svc");
    await expect(client.submitRound("abcdef012345", 1, [])).rejects.toMatchObject({ status: 409 });
    expect(fn).toHaveBeenCalledTimes(1);
  });

  it("retries one network failure with the same idempotency key and body", async () => {
    const keys: (string | undefined)[] = [];
    const bodies: string[] = [];
    let calls = 0;
    globalThis.fetch = (async (url: RequestInfo | URL, init?: RequestInit) => {
      expect(String(url)).toBe("http://svc/sessions/abcdef012345/observations");
      keys.push((init?.headers as Record<string, string>)["Idempotency-Key"]);
      bodies.push(String(init?.body));
      calls += 1;
      if (calls === 1) throw new TypeError("fetch failed");
      return jsonResponse(200, { session_id: "abcdef012345", round_index: 2 });
    }) as typeof fetch;
    const client = new Client("http://svc");
    const obs = [{ task: "t01", n: 1, agent: "a01", iteration_index: 1, duration: 12.5 }];
    const resp = await client.submitRound("abcdef012345", 1, obs);
    expect(calls).toBe(2);
    expect(keys[0]).toBeTruthy();
    expect(keys[1]).toBe(keys[0]);
    expect(bodies[1]).toBe(bodies[0]);
    expect(resp.session_id).toBe("abcdef012345");
  });

  it("uses the caller's key when one is supplied", async () => {
    const keys: (string | undefined)[] = [];
    globalThis.fetch = (async (_url: RequestInfo | URL, init?: RequestInit) => {
      keys.push((init?.headers as Record<string, string>)["Idempotency-Key"]);
      return jsonResponse(200, { session_id: "abcdef012345" });
    }) as typeof fetch;
    await new Client("http://svc").submitRound("abcdef012345", 1, [], "manual-key-7");
    expect(keys).toEqual(["manual-key-7"]);
  });

  it("gives up after a second network failure", async () => {
    const fn = vi.fn(async () => {
      throw new TypeError("fetch failed");
    });
    globalThis.fetch = fn as unknown as typeof fetch;
    const client = new Client("http://svc");
    await expect(client.submitRound("abcdef012345", 1, [])).rejects.toThrow("fetch failed");
    expect(fn).toHaveBeenCalledTimes(2);
  });
});
