/**
 * Session state machine.
 *
 * Owns everything the widgets are allowed to do, so the UI can never send a
 * rating the server would reject:
 *
 * - slider values are clamped into [1, 5] and quantized to the 0.1 grid;
 * - submit stays disabled until all three sliders were touched and the
 *   yes/no question answered;
 * - only the item the server reported as current is ever submitted, and at
 *   most one submission is in flight (the button unlocks on ack);
 * - DuplicateRating / OutOfOrderSubmission resync the cursor from the
 *   server (the server is the source of truth, e.g. after a mid-session
 *   refresh); SessionExpired moves to the restart flow; network failures
 *   keep widget state and show a retry prompt.
 */

import {
  ApiError,
  CurrentItem,
  CurrentView,
  NetworkError,
  RatingBody,
  SessionInfo,
  SubmitAck,
} from "./api.js";

/** What the machine needs from the service; ApiClient satisfies it. */
export interface CampaignApi {
  startSession(campaignId: string, subjectId: string): Promise<SessionInfo>;
  current(sessionId: string): Promise<CurrentView>;
  submitRating(sessionId: string, rating: RatingBody): Promise<SubmitAck>;
}

export const DIMENSIONS = ["quality", "alignment", "preservation"] as const;
export type Dimension = (typeof DIMENSIONS)[number];

export const SCORE_MIN = 1.0;
export const SCORE_MAX = 5.0;
export const SCORE_STEP = 0.1;

export type Phase =
  | "idle"
  | "starting"
  | "rating"
  | "submitting"
  | "session-done"
  | "no-items"
  | "expired"
  | "error";

export interface SessionView {
  phase: Phase;
  subjectId?: string;
  sessionId?: string;
  answered: number;
  total: number;
  item?: CurrentItem;
  sliders: Partial<Record<Dimension, number>>;
  qaAnswer?: boolean;
  status?: string;
}

/** Clamp into [1, 5] and snap to the 0.1 slider grid. */
export function quantizeScore(raw: number): number {
  const clamped = Math.min(SCORE_MAX, Math.max(SCORE_MIN, raw));
  return Math.round(clamped * 10) / 10;
}

export class SessionMachine {
  private view: SessionView = {
    phase: "idle",
    answered: 0,
    total: 0,
    sliders: {},
  };
  private inFlight = false;

  constructor(
    private readonly api: CampaignApi,
    private readonly campaignId: string,
    private readonly onChange: (view: SessionView) => void = () => {},
  ) {}

  getState(): SessionView {
    return {
      ...this.view,
      sliders: { ...this.view.sliders },
    };
  }

  private update(patch: Partial<SessionView>): void {
    this.view = { ...this.view, ...patch };
    this.onChange(this.getState());
  }

  private resetWidgets(): void {
    // sliders reset between items; nothing carries over
    this.view = { ...this.view, sliders: {}, qaAnswer: undefined };
  }

  async start(subjectId: string): Promise<void> {
    if (this.inFlight) return;
    this.inFlight = true;
    this.update({ phase: "starting", subjectId, status: undefined });
    try {
      const session = await this.api.startSession(this.campaignId, subjectId);
      this.view = {
        ...this.view,
        sessionId: session.session_id,
        answered: session.answered,
        total: session.total,
      };
      await this.refreshCurrent();
    } catch (error) {
      if (error instanceof ApiError && error.errorName === "NothingToAssign") {
        this.update({ phase: "no-items", status: "No items remaining for you." });
      } else if (
        error instanceof ApiError &&
        error.errorName === "CampaignComplete"
      ) {
        this.update({ phase: "no-items", status: "The campaign is complete." });
      } else if (error instanceof NetworkError) {
        this.update({
          phase: "error",
          status: "Cannot reach the service. Check the connection and retry.",
        });
      } else {
        this.update({ phase: "error", status: String(error) });
      }
    } finally {
      this.inFlight = false;
    }
  }

  /** Re-establish the server's cursor; used on load, on ack, on resync. */
  private async refreshCurrent(): Promise<void> {
    const sessionId = this.view.sessionId;
    if (!sessionId) return;
    try {
      const current = await this.api.current(sessionId);
      this.resetWidgets();
      if (current.item) {
        this.update({
          phase: "rating",
          answered: current.answered,
          total: current.total,
          item: current.item,
          status: undefined,
        });
      } else {
        this.update({
          phase: "session-done",
          answered: current.answered,
          total: current.total,
          item: undefined,
          status: "Session complete. Thank you!",
        });
      }
    } catch (error) {
      if (error instanceof ApiError && error.errorName === "SessionExpired") {
        this.update({ phase: "expired", status: "Session expired. Start a new one." });
      } else if (error instanceof NetworkError) {
        this.update({
          phase: "error",
          status: "Cannot reach the service. Check the connection and retry.",
        });
      } else {
        this.update({ phase: "error", status: String(error) });
      }
    }
  }

  /** Resume after a reload: the server cursor wins. */
  async resume(): Promise<void> {
    if (this.inFlight) return;
    this.inFlight = true;
    try {
      await this.refreshCurrent();
    } finally {
      this.inFlight = false;
    }
  }

  setSlider(dimension: Dimension, raw: number): void {
    if (this.view.phase !== "rating" || !Number.isFinite(raw)) return;
    this.update({
      sliders: { ...this.view.sliders, [dimension]: quantizeScore(raw) },
    });
  }

  setQaAnswer(answer: boolean): void {
    if (this.view.phase !== "rating") return;
    this.update({ qaAnswer: answer });
  }

  canSubmit(): boolean {
    return (
      this.view.phase === "rating" &&
      !this.inFlight &&
      this.view.item !== undefined &&
      DIMENSIONS.every((d) => this.view.sliders[d] !== undefined) &&
      this.view.qaAnswer !== undefined
    );
  }

  async submit(): Promise<void> {
    if (!this.canSubmit()) return;
    const item = this.view.item!;
    const body: RatingBody = {
      item_id: item.item_id,
      quality: this.view.sliders.quality!,
      alignment: this.view.sliders.alignment!,
      preservation: this.view.sliders.preservation!,
      qa_answer: this.view.qaAnswer!,
    };
    this.inFlight = true;
    this.update({ phase: "submitting" });
    try {
      await this.api.submitRating(this.view.sessionId!, body);
      await this.refreshCurrent();
    } catch (error) {
      if (
        error instanceof ApiError &&
        (error.errorName === "DuplicateRating" ||
          error.errorName === "OutOfOrderSubmission")
      ) {
        // stale cursor (e.g. double tab): resync from the server
        this.update({ status: `${error.errorName}: resyncing` });
        await this.refreshCurrent();
      } else if (
        error instanceof ApiError &&
        error.errorName === "SessionExpired"
      ) {
        this.update({ phase: "expired", status: "Session expired. Start a new one." });
      } else if (error instanceof NetworkError) {
        // keep widget state so nothing is lost; user retries
        this.update({
          phase: "rating",
          status: "Submission failed to send. Retry.",
        });
      } else if (error instanceof ApiError) {
        this.update({
          phase: "rating",
          status: `${error.errorName}: ${error.message}`,
        });
      } else {
        this.update({ phase: "rating", status: String(error) });
      }
    } finally {
      this.inFlight = false;
      if (this.view.phase === "submitting") {
        this.update({ phase: "rating" });
      }
    }
  }
}
