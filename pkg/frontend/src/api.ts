import type {
  PatternDoc,
  Questionnaire,
  ResponseAck,
  ServiceState,
  SessionConfigDoc,
} from "./types";

// The service wraps every failure as {"error": {"code", "message"}}.
export class ApiError extends Error {
  constructor(
    public code: string,
    message: string,
    public status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = typeof fetch;

export class ApiClient {
  constructor(
    private base = "",
    private fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request(method: string, path: string, body?: unknown) {
    const res = await this.fetchFn(this.base + path, {
      method,
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const doc = await res.json();
    if (!res.ok) {
      const err = doc?.error ?? {};
      throw new ApiError(err.code ?? "unknown", err.message ?? res.statusText, res.status);
    }
    return doc;
  }

  state(): Promise<ServiceState> {
    return this.request("GET", "/state");
  }

  async patterns(): Promise<PatternDoc[]> {
    const doc = await this.request("GET", "/patterns");
    return doc.patterns;
  }

  playPattern(req: {
    name?: string;
    cells?: number[];
    offset_c?: number;
    hold_s?: number;
  }): Promise<{ status: string }> {
    return this.request("POST", "/patterns/play", req);
  }

  startSession(
    config?: SessionConfigDoc,
  ): Promise<{ status: string; session_id: string; session_dir: string }> {
    const body = config === undefined ? { action: "start" } : { action: "start", config };
    return this.request("POST", "/session", body);
  }

  configureSession(config: SessionConfigDoc): Promise<{ status: string }> {
    return this.request("POST", "/session", { action: "configure", config });
  }

  stopSession(): Promise<{ status: string; summary: Record<string, unknown> }> {
    return this.request("POST", "/session", { action: "stop" });
  }

  submitResponse(
    response: string,
    rtS: number,
    questionnaire?: Questionnaire,
  ): Promise<ResponseAck> {
    const body: Record<string, unknown> = { response, rt_s: rtS };
    if (questionnaire !== undefined) body.questionnaire = questionnaire;
    return this.request("POST", "/response", body);
  }
}
