/**
 * Interview state machine for the browser front end.
 *
 * The state holds exactly two kinds of data: the last session view the
 * service acknowledged, and a local draft buffer for the input the user is
 * still typing.  A draft only becomes part of the committed state by way of
 * a successful answer request; until then it is never shown as answered.
 * All domain results (degree, verdict, cut-offs, fired rules) are taken
 * from the server view untouched.
 */

import {
  ApiClient,
  ApiError,
  type PendingQuestion,
  type SessionView,
} from "./api.js";

export interface UiSessionState {
  /** Last server-acknowledged session view; null before a session starts. */
  view: SessionView | null;
  /** Local, uncommitted input for the pending question. */
  draft: string;
  /** Inline message: local validation or the service's error detail. */
  error: string | null;
  /** True while a request for this session is in flight. */
  busy: boolean;
  /** True after a network-level failure; the view may be stale. */
  connectionLost: boolean;
}

export type DraftCheck =
  | { ok: true; value: string | number }
  | { ok: false; message: string };

/**
 * Validate a draft against the pending question before any request is
 * made.  This is input hygiene only — range and type come from the
 * question the server described, and the server re-checks every answer.
 */
export function checkDraft(question: PendingQuestion, raw: string): DraftCheck {
  const text = raw.trim();
  if (text === "") {
    return { ok: false, message: "enter an answer first" };
  }
  if (question.kind === "certainty") {
    if (!/^-?\d+$/.test(text)) {
      return { ok: false, message: "enter a whole number between 0 and 100" };
    }
    const value = Number(text);
    const min = question.range?.min ?? 0;
    const max = question.range?.max ?? 100;
    if (value < min || value > max) {
      return {
        ok: false,
        message: `enter a whole number between ${min} and ${max}`,
      };
    }
    return { ok: true, value };
  }
  if (question.kind === "numeric") {
    const value = Number(text);
    if (!Number.isFinite(value)) {
      return { ok: false, message: "enter a number" };
    }
    return { ok: true, value };
  }
  // categorical
  const allowed = question.allowed ?? [];
  if (!allowed.includes(text)) {
    return { ok: false, message: `choose one of: ${allowed.join(", ")}` };
  }
  return { ok: true, value: text };
}

export class SessionFlow {
  state: UiSessionState = {
    view: null,
    draft: "",
    error: null,
    busy: false,
    connectionLost: false,
  };

  constructor(private readonly client: ApiClient) {}

  /** The question the interview is waiting on, if any. */
  pendingQuestion(): PendingQuestion | null {
    return this.state.view?.pending_question ?? null;
  }

  canUndo(): boolean {
    const view = this.state.view;
    return (
      view !== null &&
      !view.stopped &&
      view.answered_questions.length > 0 &&
      !this.state.busy
    );
  }

  canStop(): boolean {
    const view = this.state.view;
    return view !== null && !view.stopped && !this.state.busy;
  }

  /** True once the session is finished and a verdict screen should show. */
  isFinished(): boolean {
    return this.state.view?.stopped === true && this.state.view.diagnosis !== null;
  }

  async start(anomalyId: string): Promise<void> {
    await this.guarded(async () => {
      const view = await this.client.createSession(anomalyId);
      this.commit(view);
    });
  }

  async refresh(): Promise<void> {
    const view = this.state.view;
    if (view === null) {
      return;
    }
    await this.guarded(async () => {
      this.commit(await this.client.getSession(view.session_id));
    });
  }

  /**
   * Validate the draft and, only if it passes, send it as the answer to
   * the pending question.  An invalid draft sets the inline message and
   * sends nothing.
   */
  async submitDraft(): Promise<void> {
    const view = this.state.view;
    const question = this.pendingQuestion();
    if (view === null || question === null || this.state.busy) {
      return;
    }
    const checked = checkDraft(question, this.state.draft);
    if (!checked.ok) {
      this.state = { ...this.state, error: checked.message };
      return;
    }
    await this.guarded(async () => {
      try {
        const next = await this.client.answer(
          view.session_id,
          question.id,
          checked.value,
        );
        this.commit(next, { clearDraft: true });
      } catch (err) {
        await this.handleApiError(err, view.session_id);
      }
    });
  }

  /**
   * Ask the service to retract the most recent answer.  On success the
   * undone question becomes pending again and the draft is pre-filled
   * with the value it previously had.
   */
  async undo(): Promise<void> {
    const view = this.state.view;
    if (view === null || this.state.busy) {
      return;
    }
    const answered = view.answered_questions;
    const last = answered.length > 0 ? answered[answered.length - 1] : undefined;
    await this.guarded(async () => {
      try {
        const next = await this.client.undo(view.session_id);
        this.commit(next);
        if (last !== undefined && next.pending_question?.id === last.question_id) {
          this.state = { ...this.state, draft: String(last.value) };
        }
      } catch (err) {
        await this.handleApiError(err, view.session_id);
      }
    });
  }

  /** Finish the interview now; `early` marks a stop before all questions. */
  async stop(early = true): Promise<void> {
    const view = this.state.view;
    if (view === null || this.state.busy) {
      return;
    }
    await this.guarded(async () => {
      try {
        this.commit(await this.client.finalize(view.session_id, early), {
          clearDraft: true,
        });
      } catch (err) {
        await this.handleApiError(err, view.session_id);
      }
    });
  }

  setDraft(draft: string): void {
    this.state = { ...this.state, draft, error: null };
  }

  /** Replace the committed view with a fresh server acknowledgement. */
  private commit(view: SessionView, opts: { clearDraft?: boolean } = {}): void {
    this.state = {
      ...this.state,
      view,
      draft: opts.clearDraft ? "" : this.state.draft,
      error: null,
      connectionLost: false,
    };
  }

  /**
   * Service errors: a conflict means this client's picture of the session
   * is stale (or the question was answered elsewhere), so re-read the
   * authoritative view; a validation rejection keeps the view and shows
   * the detail inline.
   */
  private async handleApiError(err: unknown, sessionId: string): Promise<void> {
    if (!(err instanceof ApiError)) {
      throw err;
    }
    if (err.status === 409) {
      const fresh = await this.client.getSession(sessionId);
      this.state = {
        ...this.state,
        view: fresh,
        draft: "",
        error: err.detail,
        connectionLost: false,
      };
      return;
    }
    this.state = { ...this.state, error: err.detail };
  }

  /** Run one request with the busy flag held; trap network-level failures. */
  private async guarded(action: () => Promise<void>): Promise<void> {
    this.state = { ...this.state, busy: true, error: null };
    try {
      await action();
    } catch (err) {
      if (err instanceof ApiError) {
        this.state = { ...this.state, error: err.detail };
      } else {
        this.state = {
          ...this.state,
          connectionLost: true,
          error: "connection lost — answers are safe on the server; retry when it is back",
        };
      }
    } finally {
      this.state = { ...this.state, busy: false };
    }
  }
}
