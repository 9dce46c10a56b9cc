// Application wiring: one App object owns the server documents, the form
// model, and the DOM; every state transition is confirmed by the service
// before it is rendered.

import { ApiError, Client, newIdempotencyKey } from "./api.js";
import {
  CreateFormState,
  renderCreate,
  renderHealth,
  renderSession,
  skeleton,
} from "./render.js";
import {
  FormField,
  MismatchView,
  assignmentChanges,
  createErrorView,
  formFields,
  formReady,
  mismatchView,
  observationEntries,
  roundsSummary,
  timelineModel,
} from "./view.js";
import type { AgentDoc, ScheduleDoc, ScheduleRow } from "./types.js";

export interface AppOptions {
  /** Poll interval for schedule/agent refresh; 0 disables polling. */
  pollMs?: number;
  /** Optional search config forwarded verbatim on session creation. */
  searchOverride?: Record<string, unknown>;
}

export interface App {
  root: HTMLElement;
  client: Client;
  /** Settles when the in-flight action (boot, create, submit, poll) is done. */
  busy: Promise<void>;
  readonly sessionId: string | null;
  refresh(): Promise<void>;
  dispose(): void;
}

interface SessionState {
  sid: string;
  doc: ScheduleDoc;
  agents: AgentDoc[];
  prevRows: ScheduleRow[] | null;
  fields: FormField[];
  pendingKey: string | null;
  submitError: MismatchView | null;
  busy: boolean;
}

export function createApp(root: HTMLElement, client: Client, opts: AppOptions = {}): App {
  const pollMs = opts.pollMs ?? 2000;
  const create: CreateFormState = {
    fileName: null,
    strategy: "exploit",
    rounds: 5,
    error: null,
    busy: false,
  };
  let fileText: string | null = null;
  let session: SessionState | null = null;
  let timer: ReturnType<typeof setInterval> | null = null;

  function renderAll(): void {
    if (session === null) {
      (root.querySelector("#session-panel") as HTMLElement).hidden = true;
      (root.querySelector("#create-panel") as HTMLElement).hidden = false;
      renderCreate(root, create);
      return;
    }
    const changed = assignmentChanges(session.prevRows, session.doc.rows);
    renderSession(root, {
      doc: session.doc,
      agents: session.agents,
      timeline: timelineModel(session.doc, changed),
      fields: session.fields,
      submitError: session.submitError,
      summary: roundsSummary(session.doc.rounds),
      busy: session.busy,
    });
  }

  function adopt(
    doc: ScheduleDoc,
    agents: AgentDoc[],
    prevRows: ScheduleRow[] | null,
    keepValues: boolean,
  ): void {
    const previous = keepValues && session ? session.fields : [];
    session = {
      sid: doc.session_id,
      doc,
      agents,
      prevRows,
      fields: formFields(doc.expected_observations, previous),
      pendingKey: keepValues && session ? session.pendingKey : null,
      submitError: keepValues && session ? session.submitError : null,
      busy: false,
    };
    if (typeof location !== "undefined") {
      const want = `#s=${doc.session_id}`;
      if (location.hash !== want) location.hash = want;
    }
    renderAll();
  }

  async function boot(): Promise<void> {
    skeleton(root);
    renderAll();
    try {
      const h = await client.health();
      renderHealth(root, `${h.status}, ${h.kernel_backend} kernels`, h.status === "ok");
    } catch {
      renderHealth(root, "service unreachable", false);
    }
    const m = typeof location !== "undefined" ? /#s=([0-9a-f]{12})/.exec(location.hash) : null;
    if (m) {
      try {
        await attach(m[1]);
      } catch {
        // stale hash; stay on the create panel
      }
    }
  }

  async function attach(sid: string): Promise<void> {
    const doc = await client.schedule(sid);
    const agents = (await client.agents(sid)).agents;
    adopt(doc, agents, null, false);
  }

  async function createSession(): Promise<void> {
    if (fileText === null || create.busy) return;
    create.busy = true;
    create.error = null;
    renderAll();
    let instance: unknown;
    try {
      instance = JSON.parse(fileText);
    } catch (err) {
      create.busy = false;
      create.error = createErrorView({ error: `malformed instance: ${(err as Error).message}` });
      renderAll();
      return;
    }
    try {
      const summary = await client.createSession({
        instance,
        strategy: { kind: create.strategy, total_rounds: create.rounds },
        ...(opts.searchOverride ? { search: opts.searchOverride } : {}),
      });
      create.busy = false;
      adopt(summary, summary.agents, null, false);
    } catch (err) {
      create.busy = false;
      create.error =
        err instanceof ApiError
          ? createErrorView(err.body)
          : createErrorView({ error: `service unreachable: ${(err as Error).message}` });
      renderAll();
    }
  }

  async function submitRound(): Promise<void> {
    if (session === null || session.busy || !formReady(session.fields)) return;
    const s = session;
    s.busy = true;
    renderAll();
    // the key survives failed attempts so a retry can never double-apply
    const key = s.pendingKey ?? newIdempotencyKey();
    s.pendingKey = key;
    try {
      const resp = await client.submitRound(
        s.sid,
        s.doc.round_index,
        observationEntries(s.fields),
        key,
      );
      const prevRows = s.doc.rows;
      adopt(resp, resp.agents, prevRows, false);
    } catch (err) {
      s.busy = false;
      if (err instanceof ApiError) {
        s.submitError = mismatchView(err.body);
        if (err.status === 410) await refreshInner();
      } else {
        s.submitError = {
          message: `submit failed: ${(err as Error).message}; retry keeps the same key`,
          missing: [],
          problems: [],
          expectedRound: null,
        };
      }
      renderAll();
    }
  }

  async function refreshInner(): Promise<void> {
    if (session === null || session.busy) return;
    const s = session;
    const doc = await client.schedule(s.sid);
    if (JSON.stringify(doc) === JSON.stringify(s.doc)) return;
    const agents = (await client.agents(s.sid)).agents;
    const advanced = doc.round_index !== s.doc.round_index || doc.complete !== s.doc.complete;
    adopt(doc, agents, advanced ? s.doc.rows : s.prevRows, !advanced);
  }

  const app: App = {
    root,
    client,
    busy: Promise.resolve(),
    get sessionId() {
      return session?.sid ?? null;
    },
    refresh() {
      app.busy = refreshInner();
      return app.busy;
    },
    dispose() {
      if (timer !== null) clearInterval(timer);
      timer = null;
    },
  };

  root.addEventListener("change", (ev) => {
    const t = ev.target as HTMLElement;
    if (t.id === "instance-file") {
      const input = t as HTMLInputElement;
      const file = input.files && input.files[0];
      if (!file) return;
      app.busy = (async () => {
        fileText = await file.text();
        create.fileName = file.name;
        create.error = null;
        renderAll();
      })();
    } else if (t.id === "strategy-select") {
      create.strategy = (t as HTMLSelectElement).value;
    } else if (t.id === "rounds-input") {
      const n = Number((t as HTMLInputElement).value);
      if (Number.isInteger(n) && n >= 1) create.rounds = n;
    }
  });

  root.addEventListener("input", (ev) => {
    const t = ev.target as HTMLInputElement;
    if (!t.classList || !t.classList.contains("duration-input") || session === null) return;
    const field = session.fields.find(
      (f) => f.task === t.dataset.task && String(f.n) === t.dataset.n,
    );
    if (!field) return;
    field.value = t.value;
    const btn = root.querySelector("#submit-btn") as HTMLButtonElement | null;
    if (btn) btn.disabled = session.busy || !formReady(session.fields);
  });

  root.addEventListener("click", (ev) => {
    const t = ev.target as HTMLElement;
    if (t.id === "create-btn") {
      ev.preventDefault();
      app.busy = createSession();
    }
  });

  root.addEventListener("submit", (ev) => {
    const t = ev.target as HTMLElement;
    if (t.id === "round-form") {
      ev.preventDefault();
      app.busy = submitRound();
    }
  });

  app.busy = boot();
  if (pollMs > 0) {
    timer = setInterval(() => {
      app.busy = refreshInner().catch(() => undefined);
    }, pollMs);
  }
  return app;
}

export { Client, ApiError } from "./api.js";
