import type { ApiClient } from "./api";
import { ApiError } from "./api";
import type { StreamClient } from "./stream";
import type {
  EventMessage,
  Questionnaire,
  ResponseAck,
  ServiceState,
  SessionConfigDoc,
} from "./types";

// Everything shown about a trial comes from server events; the fields
// below marked operator-only are ground truth and must never reach the
// participant route.
export type TrialDescriptor = {
  trial: number;
  polarity: string;
  pattern: string;
  reference_c?: number; // operator only
  test_c?: number; // operator only
  delta_c?: number; // operator only
};

export type SessionPanelState = {
  sessionActive: boolean;
  sessionId: string | null;
  phase: string;
  trial: TrialDescriptor | null;
  trialCount: number;
  reversalCount: number;
  conditionsDone: number;
  conditionsTotal: number;
  responseEnabled: boolean;
  lastRejection: string | null;
  lastAck: ResponseAck | null;
  finished: boolean;
  summaryStatus: string | null;
};

export type RespondOptions = {
  rtS?: number;
  questionnaire?: Questionnaire;
};

export class SessionController {
  private listeners: ((state: SessionPanelState) => void)[] = [];
  private sessionActive = false;
  private sessionId: string | null = null;
  private phase = "idle";
  private trial: TrialDescriptor | null = null;
  private trialCount = 0;
  private reversalCount = 0;
  private conditionsDone = 0;
  private conditionsTotal = 0;
  private responseEnabled = false;
  private lastRejection: string | null = null;
  private lastAck: ResponseAck | null = null;
  private finished = false;
  private summaryStatus: string | null = null;
  private stimulusOffAtMs: number | null = null;
  private inFlight = false;

  constructor(
    private api: ApiClient,
    private now: () => number = () => Date.now(),
  ) {}

  attach(stream: StreamClient): void {
    stream.onEvent((ev) => this.handleEvent(ev));
  }

  onChange(fn: (state: SessionPanelState) => void): void {
    this.listeners.push(fn);
  }

  view(): SessionPanelState {
    return {
      sessionActive: this.sessionActive,
      sessionId: this.sessionId,
      phase: this.phase,
      trial: this.trial ? { ...this.trial } : null,
      trialCount: this.trialCount,
      reversalCount: this.reversalCount,
      conditionsDone: this.conditionsDone,
      conditionsTotal: this.conditionsTotal,
      responseEnabled: this.responseEnabled,
      lastRejection: this.lastRejection,
      lastAck: this.lastAck,
      finished: this.finished,
      summaryStatus: this.summaryStatus,
    };
  }

  // Blind view for the participant route: progress only, no stimulus
  // parameters, no staircase internals.
  participantView(): {
    sessionActive: boolean;
    trialNumber: number | null;
    responseEnabled: boolean;
    lastRejection: string | null;
    finished: boolean;
  } {
    return {
      sessionActive: this.sessionActive,
      trialNumber: this.trial ? this.trial.trial + 1 : null,
      responseEnabled: this.responseEnabled,
      lastRejection: this.lastRejection,
      finished: this.finished,
    };
  }

  private emit(): void {
    const state = this.view();
    for (const fn of this.listeners) fn(state);
  }

  handleEvent(ev: Readonly<EventMessage>): void {
    const payload = ev.payload as Record<string, unknown>;
    switch (ev.kind) {
      case "session_start":
        this.sessionActive = true;
        this.finished = false;
        this.summaryStatus = null;
        this.trialCount = 0;
        this.reversalCount = 0;
        this.lastAck = null;
        this.lastRejection = null;
        break;
      case "stimulus_on":
        this.trial = {
          trial: Number(payload.trial),
          polarity: String(payload.polarity ?? ""),
          pattern: String(payload.pattern ?? ""),
          reference_c: payload.reference_c as number | undefined,
          test_c: payload.test_c as number | undefined,
          delta_c: payload.delta_c as number | undefined,
        };
        this.phase = "stimulus";
        this.responseEnabled = true;
        this.lastRejection = null;
        this.stimulusOffAtMs = null;
        break;
      case "stimulus_off":
        this.phase = "awaiting";
        this.stimulusOffAtMs = this.now();
        break;
      case "reversal":
        this.reversalCount = Number(payload.count);
        break;
      case "session_end":
        this.sessionActive = false;
        this.finished = true;
        this.responseEnabled = false;
        this.phase = "done";
        this.summaryStatus = String(payload.status ?? "");
        break;
      default:
        return;
    }
    this.emit();
  }

  syncFromState(state: ServiceState): void {
    const session = state.session;
    if (session === null) {
      if (this.sessionActive) {
        this.sessionActive = false;
        this.responseEnabled = false;
        this.phase = "idle";
        this.emit();
      }
      return;
    }
    this.sessionActive = true;
    this.sessionId = session.session_id;
    this.phase = session.phase;
    this.trialCount = session.trial_count;
    this.reversalCount = session.reversal_count;
    this.conditionsDone = session.conditions_done;
    this.conditionsTotal = session.conditions_total;
    // Server truth overrides the event-derived gate, except that a trial
    // we already answered stays locked until the next one.
    const answered = this.lastAck !== null && this.lastAck.trial === session.trial_index;
    this.responseEnabled = session.accepts_response && !answered;
    this.emit();
  }

  async start(config?: SessionConfigDoc): Promise<string> {
    const ack = await this.api.startSession(config);
    this.sessionActive = true;
    this.sessionId = ack.session_id;
    this.finished = false;
    this.summaryStatus = null;
    this.lastAck = null;
    this.lastRejection = null;
    this.trialCount = 0;
    this.reversalCount = 0;
    this.emit();
    return ack.session_id;
  }

  async stop(): Promise<void> {
    const ack = await this.api.stopSession();
    this.sessionActive = false;
    this.responseEnabled = false;
    this.finished = true;
    this.summaryStatus = String((ack.summary as { status?: string }).status ?? "");
    this.emit();
  }

  // Same/Different button handler. Locked (or in-flight) presses are
  // inert; a server rejection is surfaced and the buttons stay live.
  async respond(choice: "same" | "different", opts: RespondOptions = {}): Promise<ResponseAck | null> {
    if (!this.responseEnabled || this.inFlight) return null;
    const rtS =
      opts.rtS ??
      (this.stimulusOffAtMs === null
        ? 0
        : Math.max(0, (this.now() - this.stimulusOffAtMs) / 1000));
    this.inFlight = true;
    try {
      const ack = await this.api.submitResponse(choice, rtS, opts.questionnaire);
      this.lastAck = ack;
      this.trialCount = ack.trial_count;
      this.reversalCount = ack.reversal_count;
      this.responseEnabled = false;
      this.lastRejection = null;
      this.emit();
      return ack;
    } catch (err) {
      this.lastRejection = err instanceof ApiError ? err.message : String(err);
      this.emit();
      return null;
    } finally {
      this.inFlight = false;
    }
  }
}
