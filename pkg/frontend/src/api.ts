/** Thin typed client over the service HTTP contract; fetch is injectable for tests. */

import type {
  AnswerRequest,
  ClinicianTrace,
  CreateSessionRequest,
  PatientTrace,
  SessionHandle,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class SessionApi {
  constructor(
    private baseUrl: string = "",
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, {
      headers: { "content-type": "application/json" },
      ...init,
    });
    if (!resp.ok) {
      throw new ApiError(resp.status, await resp.text());
    }
    return (await resp.json()) as T;
  }

  createSession(body: CreateSessionRequest): Promise<SessionHandle> {
    return this.request("/sessions", { method: "POST", body: JSON.stringify(body) });
  }

  getSession(sessionId: string): Promise<SessionHandle> {
    return this.request(`/sessions/${sessionId}`);
  }

  postAnswer(sessionId: string, body: AnswerRequest): Promise<SessionHandle> {
    return this.request(`/sessions/${sessionId}/answer`, {
      method: "POST",
      body: JSON.stringify(body),
    });
  }

  getClinicianTrace(sessionId: string): Promise<ClinicianTrace> {
    return this.request(`/sessions/${sessionId}/trace?audience=clinician`);
  }

  getPatientTrace(sessionId: string): Promise<PatientTrace> {
    return this.request(`/sessions/${sessionId}/trace?audience=patient`);
  }
}
