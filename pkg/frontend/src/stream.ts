import type {
  ConnectionStatus,
  EventMessage,
  StreamMessage,
  TelemetryMessage,
} from "./types";

// Minimal surface shared by the browser WebSocket and the `ws` package,
// so tests can substitute a fake.
export interface SocketLike {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export type StreamOptions = {
  factory?: SocketFactory;
  staleAfterMs?: number;
  backoffMinMs?: number;
  backoffMaxMs?: number;
};

function deepFreeze<T>(doc: T): T {
  // Displayed state must stay exactly what the server sent.
  Object.freeze(doc);
  for (const value of Object.values(doc as object)) {
    if (value !== null && typeof value === "object" && !Object.isFrozen(value)) {
      deepFreeze(value);
    }
  }
  return doc;
}

export class StreamClient {
  private socket: SocketLike | null = null;
  private frameListeners: ((frame: Readonly<TelemetryMessage>) => void)[] = [];
  private eventListeners: ((ev: Readonly<EventMessage>) => void)[] = [];
  private statusListeners: ((status: ConnectionStatus) => void)[] = [];
  private status: ConnectionStatus = "closed";
  private staleTimer: ReturnType<typeof setTimeout> | null = null;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  private backoffMs: number;
  private stopped = false;

  private readonly factory: SocketFactory;
  private readonly staleAfterMs: number;
  private readonly backoffMinMs: number;
  private readonly backoffMaxMs: number;

  constructor(
    private url: string,
    opts: StreamOptions = {},
  ) {
    this.factory = opts.factory ?? ((u) => new WebSocket(u) as unknown as SocketLike);
    this.staleAfterMs = opts.staleAfterMs ?? 2000;
    this.backoffMinMs = opts.backoffMinMs ?? 500;
    this.backoffMaxMs = opts.backoffMaxMs ?? 5000;
    this.backoffMs = this.backoffMinMs;
  }

  onFrame(fn: (frame: Readonly<TelemetryMessage>) => void): void {
    this.frameListeners.push(fn);
  }

  onEvent(fn: (ev: Readonly<EventMessage>) => void): void {
    this.eventListeners.push(fn);
  }

  onStatus(fn: (status: ConnectionStatus) => void): void {
    this.statusListeners.push(fn);
  }

  currentStatus(): ConnectionStatus {
    return this.status;
  }

  connect(): void {
    this.stopped = false;
    this.open();
  }

  close(): void {
    this.stopped = true;
    if (this.staleTimer) clearTimeout(this.staleTimer);
    if (this.reconnectTimer) clearTimeout(this.reconnectTimer);
    this.staleTimer = null;
    this.reconnectTimer = null;
    const socket = this.socket;
    this.socket = null;
    if (socket) {
      socket.onclose = null;
      socket.close();
    }
    this.setStatus("closed");
  }

  private setStatus(status: ConnectionStatus): void {
    if (status === this.status) return;
    this.status = status;
    for (const fn of this.statusListeners) fn(status);
  }

  private open(): void {
    this.setStatus("connecting");
    let socket: SocketLike;
    try {
      socket = this.factory(this.url);
    } catch {
      this.scheduleReconnect();
      return;
    }
    this.socket = socket;
    socket.onopen = () => {
      this.backoffMs = this.backoffMinMs;
      this.setStatus("live");
      this.armStaleTimer();
    };
    socket.onmessage = (ev) => this.handleMessage(String(ev.data));
    socket.onerror = () => {};
    socket.onclose = () => {
      if (this.stopped) return;
      this.socket = null;
      this.setStatus("stale");
      this.scheduleReconnect();
    };
  }

  private handleMessage(raw: string): void {
    let doc: StreamMessage;
    try {
      doc = JSON.parse(raw);
    } catch {
      return;
    }
    this.setStatus("live");
    this.armStaleTimer();
    deepFreeze(doc);
    if (doc.type === "telemetry") {
      for (const fn of this.frameListeners) fn(doc);
    } else if (doc.type === "event") {
      for (const fn of this.eventListeners) fn(doc);
    }
  }

  private armStaleTimer(): void {
    if (this.staleTimer) clearTimeout(this.staleTimer);
    this.staleTimer = setTimeout(() => {
      if (!this.stopped) this.setStatus("stale");
    }, this.staleAfterMs);
  }

  private scheduleReconnect(): void {
    if (this.stopped || this.reconnectTimer) return;
    const delay = this.backoffMs;
    this.backoffMs = Math.min(this.backoffMs * 2, this.backoffMaxMs);
    this.reconnectTimer = setTimeout(() => {
      this.reconnectTimer = null;
      if (!this.stopped) this.open();
    }, delay);
  }
}
