/**
 * Typed client for the campaign service HTTP API.
 *
 * Server errors arrive as `{error, detail}` JSON envelopes and are rethrown
 * as ApiError with the server's error name preserved, so the session state
 * machine can branch on DuplicateRating / SessionExpired / NothingToAssign
 * without string matching on messages.
 */

export interface SessionInfo {
  session_id: string;
  subject_id: string;
  total: number;
  answered: number;
  state: string;
}

export interface CurrentItem {
  item_id: string;
  task: string;
  editing_model: string;
  instruction: string;
  source_description: string;
  target_description: string;
  qa_question: string;
  source_url: string;
  edited_url: string;
}

export interface CurrentView {
  session_id: string;
  subject_id: string;
  state: string;
  answered: number;
  total: number;
  item?: CurrentItem;
}

export interface RatingBody {
  item_id: string;
  quality: number;
  alignment: number;
  preservation: number;
  qa_answer: boolean;
}

export interface SubmitAck {
  accepted: boolean;
  session_state: string;
  answered: number;
  total: number;
}

export class ApiError extends Error {
  constructor(
    readonly errorName: string,
    readonly status: number,
    detail: string,
  ) {
    super(detail);
  }
}

/** Network-level failure (server unreachable, timeout); retryable. */
export class NetworkError extends Error {}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  resolve(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.resolve(path), init);
    } catch (cause) {
      throw new NetworkError(`cannot reach service: ${String(cause)}`);
    }
    let body: unknown = null;
    const text = await response.text();
    try {
      body = text ? JSON.parse(text) : null;
    } catch {
      body = null;
    }
    if (!response.ok) {
      const envelope = body as { error?: string; detail?: string } | null;
      throw new ApiError(
        envelope?.error ?? `HTTP${response.status}`,
        response.status,
        envelope?.detail ?? text,
      );
    }
    return body as T;
  }

  startSession(campaignId: string, subjectId: string): Promise<SessionInfo> {
    return this.request<SessionInfo>(
      `/campaigns/${encodeURIComponent(campaignId)}/sessions`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ subject_id: subjectId }),
      },
    );
  }

  current(sessionId: string): Promise<CurrentView> {
    return this.request<CurrentView>(
      `/sessions/${encodeURIComponent(sessionId)}/current`,
    );
  }

  submitRating(sessionId: string, rating: RatingBody): Promise<SubmitAck> {
    return this.request<SubmitAck>(
      `/sessions/${encodeURIComponent(sessionId)}/ratings`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(rating),
      },
    );
  }
}
