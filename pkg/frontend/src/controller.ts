/** Session flow: create/resume, answer submission with idempotent retries, 1 s polling.
 *
 * All session state lives server-side; this controller only caches the latest
 * handle, so a page reload can resume from the session id alone.
 */

import { ApiError, SessionApi } from "./api.js";
import type { PolicyConfigWire, SessionConfigWire, SessionHandle } from "./types.js";

export const POLL_INTERVAL_MS = 1000;

export interface TauInput {
  value: number;
  clamped: boolean;
}

export function clampTau(raw: number): TauInput {
  if (Number.isNaN(raw)) {
    return { value: 0.5, clamped: true };
  }
  if (raw < 0) return { value: 0, clamped: true };
  if (raw > 1) return { value: 1, clamped: true };
  return { value: raw, clamped: false };
}

export function focusedPolicy(): PolicyConfigWire {
  return { mode: "focused", k: 3, lambda: 0.5, theta: 0.3 };
}

export function buildConfig(tau: number, focused: boolean): SessionConfigWire {
  const config: SessionConfigWire = { tau };
  if (focused) {
    config.policy = focusedPolicy();
  }
  return config;
}

export class SessionController {
  handle: SessionHandle | null = null;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private api: SessionApi,
    private onUpdate: (handle: SessionHandle) => void = () => {},
  ) {}

  private update(handle: SessionHandle): SessionHandle {
    this.handle = handle;
    this.onUpdate(handle);
    return handle;
  }

  async start(kbId: string, tau: number, focused: boolean): Promise<SessionHandle> {
    const handle = await this.api.createSession({
      kb_id: kbId,
      config: buildConfig(tau, focused),
      mode: "human_patient",
    });
    return this.update(handle);
  }

  async resume(sessionId: string): Promise<SessionHandle> {
    return this.update(await this.api.getSession(sessionId));
  }

  private async submit(body: Parameters<SessionApi["postAnswer"]>[1]): Promise<SessionHandle> {
    if (!this.handle) throw new Error("no active session");
    const sessionId = this.handle.session_id;
    try {
      return this.update(await this.api.postAnswer(sessionId, body));
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // the answer already landed (or the state moved on): refresh, don't resubmit
        return this.update(await this.api.getSession(sessionId));
      }
      throw err;
    }
  }

  answerText(text: string): Promise<SessionHandle> {
    if (!this.handle) throw new Error("no active session");
    return this.submit({ text, nonce: this.handle.nonce });
  }

  answerStructured(value: string | number): Promise<SessionHandle> {
    if (!this.handle) throw new Error("no active session");
    return this.submit({
      structured: { value, confidence_label: "very_likely" },
      nonce: this.handle.nonce,
    });
  }

  answerNotSure(): Promise<SessionHandle> {
    return this.answerText("I'm not sure");
  }

  startPolling(intervalMs: number = POLL_INTERVAL_MS): void {
    this.stopPolling();
    this.timer = setInterval(() => {
      void this.pollOnce();
    }, intervalMs);
  }

  async pollOnce(): Promise<void> {
    if (!this.handle) return;
    if (this.handle.state !== "awaiting_answer") {
      this.stopPolling();
      return;
    }
    try {
      this.update(await this.api.getSession(this.handle.session_id));
    } catch {
      // transient poll failures are ignored; the next tick retries
    }
  }

  stopPolling(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}
