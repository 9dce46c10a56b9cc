// JSON documents exchanged with the scheduling service. Field names are
// the wire contract; keep them in sync with the HTTP endpoints.

export interface GaussianDoc {
  mean: number;
  stddev: number;
}

export interface ScheduleRow {
  task: string;
  n: number;
  agent: string;
  start_mean: number;
  finish_mean: number;
  finish_std: number;
}

export interface DeadlineDoc {
  key: string;
  kind: string;
  bound: number;
  epsilon_d: number;
  satisfaction_prob: number;
  margin: number;
  passed: boolean;
}

export interface ExpectedObservation {
  task: string;
  n: number;
  agent: string;
  iteration_index: number;
}

export interface RoundRecord {
  round: number;
  observed_makespan: number;
  lambda: number;
  z1: number;
  robust: boolean;
}

export interface StrategyDoc {
  kind: string;
  lambda_explore: number;
  total_rounds: number;
}

export interface ObjectiveDoc {
  z: number;
  z1: number;
  z2: number;
  lambda: number;
}

export interface ScheduleDoc {
  session_id: string;
  round_index: number;
  total_rounds: number;
  complete: boolean;
  strategy: StrategyDoc;
  rounds: RoundRecord[];
  lambda: number;
  robust: boolean;
  schedule: unknown;
  rows: ScheduleRow[];
  objective: ObjectiveDoc;
  deadlines: DeadlineDoc[];
  makespan_ub: GaussianDoc;
  expected_observations: ExpectedObservation[];
}

export interface ObservationHistoryEntry {
  round: number;
  n: number;
  iteration_index: number;
  duration: number;
}

export interface AgentTaskDoc {
  task_id: string;
  params: { c: number; k: number; beta: number };
  residual_std: number;
  completed_repetitions: number;
  next_iteration: number;
  projection: GaussianDoc;
  observations: ObservationHistoryEntry[];
}

export interface AgentDoc {
  agent_id: string;
  kind: string;
  tasks: AgentTaskDoc[];
}

export interface AgentsDoc {
  session_id: string;
  round_index: number;
  complete: boolean;
  agents: AgentDoc[];
}

// POST /sessions response; GET /schedule plus the agent states.
export interface SessionSummary extends ScheduleDoc {
  agents: AgentDoc[];
}

export interface ErrorBody {
  error: string;
  violations?: { code: string; message: string }[];
  problems?: string[];
  missing?: { task: string; n: number }[];
  expected_round?: number;
}

export interface ObservationEntry {
  task: string;
  n: number;
  agent: string;
  iteration_index: number;
  duration: number;
}

export interface CreateSessionRequest {
  instance: unknown;
  strategy: { kind: string; total_rounds: number; lambda_explore?: number };
  search?: Record<string, unknown>;
}

export interface HealthDoc {
  status: string;
  kernel_backend: string;
}
