// View models derived from service documents. Pure data in, pure data
// out, so the whole layer is unit-testable without a DOM.

import { normalQuantile } from "./format.js";
import type {
  AgentTaskDoc,
  DeadlineDoc,
  ErrorBody,
  ExpectedObservation,
  ObservationEntry,
  RoundRecord,
  ScheduleDoc,
  ScheduleRow,
} from "./types.js";

// ------------------------------------------------------------ round form

export interface FormField {
  task: string;
  n: number;
  agent: string;
  iterationIndex: number;
  value: string;
}

export function fieldKey(f: { task: string; n: number }): string {
  return `${f.task}#${f.n}`;
}

/** One field per iteration the service expects this round; values the
    operator already typed carry over when the expected set is unchanged. */
export function formFields(
  expected: ExpectedObservation[],
  previous: FormField[] = [],
): FormField[] {
  const kept = new Map(previous.map((f) => [fieldKey(f), f.value]));
  return expected.map((e) => ({
    task: e.task,
    n: e.n,
    agent: e.agent,
    iterationIndex: e.iteration_index,
    value: kept.get(fieldKey(e)) ?? "",
  }));
}

export function parsedDuration(value: string): number | null {
  const t = value.trim();
  if (t === "") return null;
  const x = Number(t);
  return Number.isFinite(x) && x > 0 ? x : null;
}

// submit stays disabled until every field holds a positive number
export function formReady(fields: FormField[]): boolean {
  return fields.length > 0 && fields.every((f) => parsedDuration(f.value) !== null);
}

export function observationEntries(fields: FormField[]): ObservationEntry[] {
  return fields.map((f) => ({
    task: f.task,
    n: f.n,
    agent: f.agent,
    iteration_index: f.iterationIndex,
    duration: parsedDuration(f.value) ?? 0,
  }));
}

// ------------------------------------------------------------- timeline

export interface TimelineBlock {
  task: string;
  n: number;
  agent: string;
  start: number;
  finish: number;
  finishStd: number;
  shadeEnd: number;
  changed: boolean;
}

export interface TimelineLane {
  agent: string;
  blocks: TimelineBlock[];
}

export interface TimelineMarker {
  key: string;
  at: number;
  passed: boolean;
  margin: number;
}

export interface TimelineModel {
  lanes: TimelineLane[];
  markers: TimelineMarker[];
  horizon: number;
}

/** Iterations whose agent changed since the previous round; explore swaps
    show up as highlighted blocks. */
export function assignmentChanges(
  previous: ScheduleRow[] | null,
  rows: ScheduleRow[],
): Set<string> {
  if (!previous) return new Set();
  const before = new Map(previous.map((r) => [fieldKey(r), r.agent]));
  const moved = new Set<string>();
  for (const r of rows) {
    const old = before.get(fieldKey(r));
    if (old !== undefined && old !== r.agent) moved.add(fieldKey(r));
  }
  return moved;
}

function shadeZ(deadlines: DeadlineDoc[]): number {
  // risk is allocated uniformly, so any deadline's share gives the
  // quantile the certifier held each block to
  if (deadlines.length === 0) return 0;
  const z = normalQuantile(1 - deadlines[0].epsilon_d);
  return Number.isFinite(z) && z > 0 ? z : 0;
}

export function timelineModel(doc: ScheduleDoc, changed: Set<string>): TimelineModel {
  const z = shadeZ(doc.deadlines);
  const agents = [...new Set(doc.rows.map((r) => r.agent))].sort();
  const lanes: TimelineLane[] = agents.map((agent) => ({
    agent,
    blocks: doc.rows
      .filter((r) => r.agent === agent)
      .map((r) => ({
        task: r.task,
        n: r.n,
        agent: r.agent,
        start: r.start_mean,
        finish: r.finish_mean,
        finishStd: r.finish_std,
        shadeEnd: r.finish_mean + z * r.finish_std,
        changed: changed.has(fieldKey(r)),
      }))
      .sort((a, b) => a.start - b.start),
  }));
  const markers: TimelineMarker[] = doc.deadlines.map((d) => ({
    key: d.key,
    at: d.bound,
    passed: d.passed,
    margin: d.margin,
  }));
  let horizon = 1;
  for (const lane of lanes)
    for (const b of lane.blocks) horizon = Math.max(horizon, b.shadeEnd);
  for (const m of markers) horizon = Math.max(horizon, m.at);
  return { lanes, markers, horizon: horizon * 1.02 };
}

// ----------------------------------------------------------- error views

export interface CreateErrorView {
  message: string;
  details: string[];
  fields: Set<"instance" | "strategy">;
}

/** Map a create failure onto the form: instance problems highlight the
    file input, config problems the strategy controls. Messages pass
    through verbatim. */
export function createErrorView(body: ErrorBody): CreateErrorView {
  const fields = new Set<"instance" | "strategy">();
  if (body.error.includes("config")) fields.add("strategy");
  else fields.add("instance");
  const details = (body.violations ?? []).map((v) => `${v.code}: ${v.message}`);
  return { message: body.error, details, fields };
}

export interface MismatchView {
  message: string;
  missing: string[];
  problems: string[];
  expectedRound: number | null;
}

/** 409 bodies list what the service expected vs. what arrived. */
export function mismatchView(body: ErrorBody): MismatchView {
  return {
    message: body.error,
    missing: (body.missing ?? []).map((m) => `${m.task}#${m.n}`),
    problems: body.problems ?? [],
    expectedRound: body.expected_round ?? null,
  };
}

// ------------------------------------------------------------ completion

export interface RoundSummaryRow {
  round: number;
  makespan: number;
  lambda: number;
  robust: boolean;
}

export function roundsSummary(rounds: RoundRecord[]): RoundSummaryRow[] {
  return rounds.map((r) => ({
    round: r.round,
    makespan: r.observed_makespan,
    lambda: r.lambda,
    robust: r.robust,
  }));
}

// ------------------------------------------------------------ sparklines

export interface SparkPoint {
  i: number;
  y: number;
}

/** Observed durations by iteration, with the projected next mean as the
    final, hollow point. */
export function sparkSeries(t: AgentTaskDoc): { observed: SparkPoint[]; projected: SparkPoint } {
  const observed = [...t.observations]
    .sort((a, b) => a.iteration_index - b.iteration_index)
    .map((o) => ({ i: o.iteration_index, y: o.duration }));
  return { observed, projected: { i: t.next_iteration, y: t.projection.mean } };
}

export function sparkPath(points: SparkPoint[], width: number, height: number): string {
  if (points.length === 0) return "";
  const xs = points.map((p) => p.i);
  const ys = points.map((p) => p.y);
  const x0 = Math.min(...xs);
  const x1 = Math.max(...xs);
  const y0 = Math.min(...ys);
  const y1 = Math.max(...ys);
  const sx = (i: number) => (x1 === x0 ? width / 2 : ((i - x0) / (x1 - x0)) * (width - 4) + 2);
  const sy = (y: number) => (y1 === y0 ? height / 2 : height - (((y - y0) / (y1 - y0)) * (height - 4) + 2));
  return points.map((p, k) => `${k === 0 ? "M" : "L"}${sx(p.i).toFixed(1)},${sy(p.y).toFixed(1)}`).join(" ");
}
