// DOM construction. Rendering is wholesale: each pass rebuilds the panels
// from the current documents, with form values carried in the view model
// rather than scraped back out of inputs.

import { gaussianLabel, lambdaLabel, seconds } from "./format.js";
import {
  CreateErrorView,
  FormField,
  MismatchView,
  RoundSummaryRow,
  TimelineModel,
  fieldKey,
  formReady,
  sparkPath,
  sparkSeries,
} from "./view.js";
import type { AgentDoc, DeadlineDoc, ScheduleDoc } from "./types.js";

type Attrs = Record<string, string | boolean>;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Attrs = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    if (typeof v === "boolean") {
      if (v) node.setAttribute(k, "");
    } else {
      node.setAttribute(k, v);
    }
  }
  node.append(...children);
  return node;
}

export function skeleton(root: HTMLElement): void {
  root.replaceChildren(
    el(
      "header",
      {},
      el("h1", {}, "Team schedule console"),
      el("span", { id: "health-badge", class: "badge" }, "connecting"),
    ),
    el("section", { id: "create-panel" }),
    el("section", { id: "session-panel", hidden: true }),
  );
}

export function renderHealth(root: HTMLElement, text: string, ok: boolean): void {
  const badge = root.querySelector("#health-badge")!;
  badge.textContent = text;
  badge.className = ok ? "badge badge-ok" : "badge badge-bad";
}

// ----------------------------------------------------------- create form

export interface CreateFormState {
  fileName: string | null;
  strategy: string;
  rounds: number;
  error: CreateErrorView | null;
  busy: boolean;
}

export function renderCreate(root: HTMLElement, s: CreateFormState): void {
  const panel = root.querySelector("#create-panel")!;
  const instanceBad = s.error?.fields.has("instance") ?? false;
  const strategyBad = s.error?.fields.has("strategy") ?? false;
  panel.replaceChildren(
    el("h2", {}, "New session"),
    el(
      "div",
      { class: `form-row${instanceBad ? " field-bad" : ""}` },
      el("label", { for: "instance-file" }, "Instance file"),
      el("input", { id: "instance-file", type: "file", accept: ".json,application/json" }),
      el("span", { class: "file-name" }, s.fileName ?? "none chosen"),
    ),
    el(
      "div",
      { class: `form-row${strategyBad ? " field-bad" : ""}` },
      el("label", { for: "strategy-select" }, "Strategy"),
      (() => {
        const sel = el("select", { id: "strategy-select" });
        for (const kind of ["exploit", "explore_exploit", "annealed"]) {
          const opt = el("option", { value: kind }, kind.replace("_", "-"));
          if (kind === s.strategy) opt.selected = true;
          sel.append(opt);
        }
        return sel;
      })(),
      el("label", { for: "rounds-input" }, "Rounds"),
      el("input", {
        id: "rounds-input",
        type: "number",
        min: "1",
        value: String(s.rounds),
      }),
    ),
    el(
      "div",
      { class: "form-row" },
      el("button", { id: "create-btn", disabled: s.busy || s.fileName === null }, "Create session"),
    ),
    s.error
      ? el(
          "div",
          { id: "create-error", class: "error-box" },
          el("p", {}, s.error.message),
          el("ul", {}, ...s.error.details.map((d) => el("li", {}, d))),
        )
      : el("div", { id: "create-error", hidden: true }),
  );
}

// --------------------------------------------------------------- session

function badgeRow(doc: ScheduleDoc): HTMLElement {
  const strat = doc.strategy;
  return el(
    "div",
    { class: "badges" },
    el("span", { id: "session-badge", class: "badge" }, `session ${doc.session_id}`),
    el(
      "span",
      { id: "round-badge", class: "badge" },
      doc.complete ? "complete" : `round ${doc.round_index} / ${doc.total_rounds}`,
    ),
    el(
      "span",
      { id: "strategy-badge", class: "badge" },
      `${strat.kind.replace("_", "-")} ${lambdaLabel(doc.lambda)}`,
    ),
    el(
      "span",
      { id: "robust-badge", class: doc.robust ? "badge badge-ok" : "badge badge-bad" },
      doc.robust ? "robust" : "at risk",
    ),
  );
}

function timelinePanel(model: TimelineModel): HTMLElement {
  const pct = (x: number) => `${((x / model.horizon) * 100).toFixed(3)}%`;
  const lanes = model.lanes.map((lane) =>
    el(
      "div",
      { class: "lane", "data-agent": lane.agent },
      el("span", { class: "lane-label" }, lane.agent),
      el(
        "div",
        { class: "lane-track" },
        ...lane.blocks.map((b) =>
          el(
            "div",
            {
              class: `block${b.changed ? " block-changed" : ""}`,
              "data-block": "",
              "data-task": b.task,
              "data-n": String(b.n),
              "data-agent": b.agent,
              "data-start": b.start.toFixed(3),
              "data-finish": b.finish.toFixed(3),
              style: `left:${pct(b.start)};width:${pct(b.finish - b.start)}`,
              title: `${b.task}#${b.n} ${seconds(b.start)} to ${gaussianLabel(b.finish, b.finishStd)}`,
            },
            el("span", { class: "block-label" }, `${b.task}#${b.n}`),
            el("div", {
              class: "block-shade",
              style: `width:${pct(b.shadeEnd - b.finish)}`,
            }),
          ),
        ),
        ...model.markers.map((m) =>
          el("div", {
            class: `marker ${m.passed ? "marker-ok" : "marker-bad"}`,
            "data-key": m.key,
            style: `left:${pct(m.at)}`,
            title: `${m.key} at ${seconds(m.at)}, margin ${seconds(m.margin)}`,
          }),
        ),
      ),
    ),
  );
  return el("div", { id: "timeline" }, ...lanes);
}

function deadlinePanel(deadlines: DeadlineDoc[]): HTMLElement {
  return el(
    "ul",
    { id: "deadline-list" },
    ...deadlines.map((d) =>
      el(
        "li",
        { class: d.passed ? "deadline-ok" : "deadline-bad", "data-key": d.key },
        `${d.key}: ${seconds(d.bound)} margin ${seconds(d.margin)} ` +
          `(meets ${(d.satisfaction_prob * 100).toFixed(1)}%, needs ${((1 - d.epsilon_d) * 100).toFixed(1)}%)`,
      ),
    ),
  );
}

function formPanel(fields: FormField[], error: MismatchView | null, busy: boolean): HTMLElement {
  const rows = fields.map((f) =>
    el(
      "div",
      { class: "form-row" },
      el(
        "label",
        {},
        `${f.agent}: ${f.task}#${f.n} (iteration ${f.iterationIndex})`,
      ),
      (() => {
        const input = el("input", {
          class: "duration-input",
          "data-task": f.task,
          "data-n": String(f.n),
          type: "text",
          inputmode: "decimal",
          placeholder: "seconds",
        });
        input.value = f.value;
        return input;
      })(),
    ),
  );
  return el(
    "form",
    { id: "round-form" },
    el("h3", {}, "Observed durations"),
    ...rows,
    el(
      "div",
      { class: "form-row" },
      el("button", { id: "submit-btn", type: "submit", disabled: busy || !formReady(fields) }, "Submit round"),
    ),
    error
      ? el(
          "div",
          { id: "submit-error", class: "error-box" },
          el("p", {}, error.message + (error.expectedRound !== null ? ` (service is on round ${error.expectedRound})` : "")),
          el(
            "ul",
            {},
            ...error.missing.map((m) => el("li", {}, `missing: ${m}`)),
            ...error.problems.map((p) => el("li", {}, p)),
          ),
        )
      : el("div", { id: "submit-error", hidden: true }),
  );
}

function completePanel(rows: RoundSummaryRow[]): HTMLElement {
  return el(
    "div",
    { id: "complete-panel" },
    el("h3", {}, "Session complete"),
    el(
      "table",
      { id: "rounds-table" },
      el(
        "thead",
        {},
        el("tr", {}, ...["round", "makespan", "lambda", "robust"].map((h) => el("th", {}, h))),
      ),
      el(
        "tbody",
        {},
        ...rows.map((r) =>
          el(
            "tr",
            { "data-round": String(r.round) },
            el("td", {}, String(r.round)),
            el("td", { class: "round-makespan" }, seconds(r.makespan)),
            el("td", {}, lambdaLabel(r.lambda)),
            el("td", {}, r.robust ? "yes" : "no"),
          ),
        ),
      ),
    ),
  );
}

function curvesPanel(agents: AgentDoc[]): HTMLElement {
  const cards: HTMLElement[] = [];
  for (const a of agents) {
    for (const t of a.tasks) {
      const { observed, projected } = sparkSeries(t);
      const all = [...observed, projected];
      const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
      svg.setAttribute("viewBox", "0 0 120 36");
      svg.setAttribute("class", "spark");
      const path = document.createElementNS("http://www.w3.org/2000/svg", "path");
      path.setAttribute("d", sparkPath(all, 120, 36));
      path.setAttribute("class", observed.length > 0 ? "spark-line" : "spark-line spark-empty");
      svg.append(path);
      cards.push(
        el(
          "div",
          { class: "curve-card", "data-agent": a.agent_id, "data-task": t.task_id },
          el("span", { class: "curve-label" }, `${a.agent_id} · ${t.task_id}`),
          svg,
          el(
            "span",
            { class: "curve-next" },
            `done ${t.completed_repetitions}, next ${gaussianLabel(t.projection.mean, t.projection.stddev)}`,
          ),
        ),
      );
    }
  }
  return el("div", { id: "curves" }, el("h3", {}, "Learning curves"), ...cards);
}

export interface SessionViewState {
  doc: ScheduleDoc;
  agents: AgentDoc[];
  timeline: TimelineModel;
  fields: FormField[];
  submitError: MismatchView | null;
  summary: RoundSummaryRow[];
  busy: boolean;
}

export function renderSession(root: HTMLElement, s: SessionViewState): void {
  const panel = root.querySelector("#session-panel") as HTMLElement;
  const create = root.querySelector("#create-panel") as HTMLElement;
  create.hidden = true;
  panel.hidden = false;
  const parts: HTMLElement[] = [badgeRow(s.doc), timelinePanel(s.timeline), deadlinePanel(s.doc.deadlines)];
  if (s.doc.complete) {
    parts.push(completePanel(s.summary));
  } else {
    parts.push(formPanel(s.fields, s.submitError, s.busy));
  }
  parts.push(curvesPanel(s.agents));
  panel.replaceChildren(...parts);
}
