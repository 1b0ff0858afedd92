/**
 * Typed client for the diagnosis HTTP service.
 *
 * Every function talks JSON to the endpoints exposed by `cchain serve`.
 * The interfaces mirror the service's response shapes one to one; nothing
 * here recomputes or post-processes the numbers the server sends.
 */

export interface Anomaly {
  id: string;
  name: string;
}

export interface ValueRange {
  min: number;
  max: number;
}

export interface PendingQuestion {
  id: string;
  prompt: string;
  kind: "numeric" | "categorical" | "certainty";
  unit: string | null;
  allowed: string[] | null;
  range?: ValueRange;
}

export interface Progress {
  answered: number;
  total: number;
}

export interface Cutoff {
  tnd: number;
  tpd: number;
}

export interface AnsweredQuestion {
  question_id: string;
  value: string | number;
}

export interface FiredRule {
  rule_id: string;
  cf: number;
}

export interface DiagnosisView {
  anomaly: string;
  certainty_degree: number | null;
  display_percent: number | null;
  verdict: string;
  no_evidence: boolean;
  stopped_early: boolean;
  fired_rules: FiredRule[];
}

export interface SessionView {
  session_id: string;
  anomaly: Anomaly;
  stopped: boolean;
  stopped_early: boolean;
  progress: Progress;
  pending_question: PendingQuestion | null;
  certainty_degree: number | null;
  display_percent: number | null;
  no_evidence: boolean;
  verdict_preview: string;
  cutoff: Cutoff;
  answered_questions: AnsweredQuestion[];
  diagnosis: DiagnosisView | null;
}

/** Non-2xx response, carrying the HTTP status and the service's detail text. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`${status}: ${detail}`);
    this.name = "ApiError";
  }
}

async function parseOrThrow<T>(response: Response): Promise<T> {
  if (response.ok) {
    return (await response.json()) as T;
  }
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (typeof body?.detail === "string") {
      detail = body.detail;
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, detail);
}

export class ApiClient {
  constructor(
    private readonly baseUrl = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private request(path: string, init?: RequestInit): Promise<Response> {
    return this.fetchFn(this.baseUrl + path, init);
  }

  private post(path: string, body?: unknown): Promise<Response> {
    return this.request(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
  }

  async listAnomalies(): Promise<Anomaly[]> {
    const data = await parseOrThrow<{ anomalies: Anomaly[] }>(
      await this.request("/anomalies"),
    );
    return data.anomalies;
  }

  async createSession(anomaly: string): Promise<SessionView> {
    return parseOrThrow(await this.post("/sessions", { anomaly }));
  }

  async getSession(sessionId: string): Promise<SessionView> {
    return parseOrThrow(await this.request(`/sessions/${sessionId}`));
  }

  /**
   * Submit one answer.  The service runs in strict mode by default: it
   * rejects the call with 409 unless `questionId` is the question the
   * interview is currently waiting on.
   */
  async answer(
    sessionId: string,
    questionId: string,
    value: string | number,
  ): Promise<SessionView> {
    return parseOrThrow(
      await this.post(`/sessions/${sessionId}/answers`, {
        question_id: questionId,
        value,
      }),
    );
  }

  async undo(sessionId: string): Promise<SessionView> {
    return parseOrThrow(await this.post(`/sessions/${sessionId}/undo`));
  }

  async finalize(sessionId: string, early = false): Promise<SessionView> {
    return parseOrThrow(
      await this.post(`/sessions/${sessionId}/finalize`, { early }),
    );
  }
}
