/** Typed client for the mediation service HTTP API (v1). */

export interface PendingAction {
  action: string;
  role: "victim" | "offender" | "moderator";
  label: string;
  opens_modal: boolean;
}

export interface Outcome {
  label: string;
  furthest_stage?: string;
  reason?: string;
}

export interface Closure {
  reason: string;
  furthest_stage: string;
  closed_at: string;
}

export interface CaseDetail {
  case_id: string;
  case_no: number;
  community_id: string;
  offender_id: string;
  victim_id: string;
  moderator_id: string;
  mute_duration: number;
  mute_until: string;
  reason: string;
  review_request: boolean;
  created_at: string;
  state: string;
  apology_request: string | null;
  apology_response: string | null;
  attempt_count: number;
  furthest_stage: string;
  closure: Closure | null;
  version: number;
  outcome?: Outcome;
  pending_actions: PendingAction[];
}

export interface EventRecord {
  seq: number;
  at: string;
  actor: string;
  kind: string;
  payload: Record<string, unknown>;
}

export interface CommunityInfo {
  community_id: string;
  moderators: string[];
}

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`${status}: ${detail}`);
  }
}

export interface OpenCaseForm {
  community_id: string;
  offender: string;
  victim: string;
  duration: string;
  reason: string;
  review_request: boolean;
}

export class ApiClient {
  constructor(private baseUrl: string, private token: string) {}

  setToken(token: string): void {
    this.token = token;
  }

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, {
      method,
      headers: {
        Authorization: `Bearer ${this.token}`,
        ...(body === undefined ? {} : { "Content-Type": "application/json" }),
      },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    let payload: unknown = null;
    try {
      payload = await response.json();
    } catch {
      /* non-JSON error body */
    }
    if (!response.ok) {
      const detail =
        payload && typeof payload === "object" && "detail" in payload
          ? String((payload as { detail: unknown }).detail)
          : response.statusText;
      throw new ApiError(response.status, detail);
    }
    return payload as T;
  }

  health(): Promise<{ status: string; version: string }> {
    return this.call("GET", "/v1/healthz");
  }

  createCommunity(config: Record<string, unknown> = {}): Promise<CommunityInfo> {
    return this.call("POST", "/v1/sim/communities", { config });
  }

  openCase(form: OpenCaseForm): Promise<{ case_id: string; state: string }> {
    return this.call("POST", "/v1/sim/cases", form);
  }

  getCase(caseId: string): Promise<CaseDetail> {
    return this.call("GET", `/v1/cases/${caseId}`);
  }

  getEvents(caseId: string): Promise<{ case_id: string; events: EventRecord[] }> {
    return this.call("GET", `/v1/cases/${caseId}/events`);
  }

  act(caseId: string, action: string, actor: string, text?: string): Promise<CaseDetail> {
    const body: Record<string, unknown> = { action, actor };
    if (text !== undefined) body.text = text;
    return this.call("POST", `/v1/cases/${caseId}/actions`, body);
  }
}
