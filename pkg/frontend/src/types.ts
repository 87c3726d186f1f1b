// Wire types for the device service API. Field names mirror the JSON
// documents exactly; nothing here is computed client-side.

export type ArrayFrame = {
  tick: number;
  setpoints: number[];
  measured: number[];
  currents: number[];
  external: number[];
  mode: string;
  clamp_count: number;
  warnings: string[];
  fault: boolean;
};

export type TelemetryMessage = ArrayFrame & {
  type: "telemetry";
  t_us: number;
};

export type EventMessage = {
  type: "event";
  kind: string;
  t_us: number;
  payload: Record<string, unknown>;
};

export type StreamMessage = TelemetryMessage | EventMessage;

export type SessionView = {
  session_id: string;
  experiment: string;
  participant_id: string;
  seed: number;
  phase: string;
  trial_index: number;
  condition: { polarity: string; pattern: string } | null;
  conditions_done: number;
  conditions_total: number;
  trial_count: number;
  reversal_count: number;
  accepts_response: boolean;
};

export type ServiceMetrics = {
  pace: string;
  tick_period_s: number;
  ticks: number;
  overruns: number;
};

export type ServiceState = {
  status: string;
  session: SessionView | null;
  ambient_c: number;
  t_us: number;
  frame: ArrayFrame;
  metrics: ServiceMetrics;
};

export type PatternDoc = {
  schema: number;
  kind: string;
  name: string;
  active_cells: number[];
  offset_c: number;
};

export type SessionConfigDoc = {
  experiment: string;
  seed?: number;
  participant_id?: string;
  ambient_c?: number;
  conditions?: [string, string][];
  reversals_to_stop?: number;
  stimulus_duration_s?: number;
  response_window_s?: number;
};

export type ResponseAck = {
  accepted: boolean;
  applied: "immediate" | "at_stimulus_end";
  trial: number;
  trial_count: number;
  reversal_count: number;
  condition_finished: boolean;
};

export type Questionnaire = Record<string, number>;

export type ConnectionStatus = "connecting" | "live" | "stale" | "closed";
