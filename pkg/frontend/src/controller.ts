/** Session orchestration: wires the API client to the state machine.
 *
 * Votes are posted exactly once per question. The submit path locks the
 * state synchronously before any await, so repeated submit calls (double
 * click, Enter mashing) collapse into one POST. Network failures retry
 * with backoff; the server deduplicates by (session, question), so a
 * retry after a lost response is safe and reports duplicate=true.
 */

import { ApiClient, ApiError } from "./api.js";
import type { AppState } from "./state.js";
import {
  candidateForDigit,
  candidateSelected,
  canSubmit,
  failed,
  initialState,
  questionLoaded,
  sessionStarted,
  studyComplete,
  submitStarted,
  voteAccepted,
} from "./state.js";

export type Notify = (state: AppState) => void;
export type Sleep = (ms: number) => Promise<void>;

const defaultSleep: Sleep = (ms) => new Promise((resolve) => setTimeout(resolve, ms));

export interface ControllerOptions {
  /** Attempts per vote before giving up (first try included). */
  maxAttempts?: number;
  /** Base backoff between attempts, in milliseconds. */
  retryDelayMs?: number;
  sleep?: Sleep;
}

export class StudyController {
  private readonly api: ApiClient;
  private readonly notify: Notify;
  private readonly maxAttempts: number;
  private readonly retryDelayMs: number;
  private readonly sleep: Sleep;
  state: AppState;

  constructor(api: ApiClient, notify: Notify, options: ControllerOptions = {}) {
    this.api = api;
    this.notify = notify;
    this.maxAttempts = options.maxAttempts ?? 4;
    this.retryDelayMs = options.retryDelayMs ?? 500;
    this.sleep = options.sleep ?? defaultSleep;
    this.state = initialState();
  }

  private update(next: AppState): void {
    if (next === this.state) {
      return;
    }
    this.state = next;
    this.notify(next);
  }

  async start(): Promise<void> {
    try {
      const info = await this.api.createSession();
      this.update(sessionStarted(this.state, info.session));
      await this.advance();
    } catch (err) {
      this.update(failed(this.state, describe(err)));
    }
  }

  select(candidateId: string): void {
    this.update(candidateSelected(this.state, candidateId));
  }

  selectDigit(digit: number): void {
    const id = candidateForDigit(this.state, digit);
    if (id !== null) {
      this.select(id);
    }
  }

  async submit(): Promise<void> {
    if (!canSubmit(this.state)) {
      return;
    }
    const session = this.state.session;
    const view = this.state.view;
    const choice = this.state.selected;
    if (session === null || view === null || choice === null) {
      return;
    }
    // Synchronous lock: after this line canSubmit() is false, so a second
    // submit() before the POST resolves is a no-op.
    this.update(submitStarted(this.state));
    try {
      await this.postVoteOnce(session, view.question, choice);
      this.update(voteAccepted(this.state));
      await this.advance();
    } catch (err) {
      this.update(failed(this.state, describe(err)));
    }
  }

  /** POST the vote, retrying transport failures until one attempt lands. */
  private async postVoteOnce(
    session: string,
    question: string,
    choice: string,
  ): Promise<void> {
    let lastError: unknown = null;
    for (let attempt = 1; attempt <= this.maxAttempts; attempt += 1) {
      try {
        await this.api.submitVote(session, question, choice);
        return;
      } catch (err) {
        if (err instanceof ApiError) {
          throw err; // the server answered; retrying cannot help
        }
        lastError = err;
        if (attempt < this.maxAttempts) {
          await this.sleep(this.retryDelayMs * attempt);
        }
      }
    }
    throw lastError ?? new Error("vote failed");
  }

  private async advance(): Promise<void> {
    const session = this.state.session;
    if (session === null) {
      return;
    }
    const view = await this.api.nextQuestion(session);
    if (view === null) {
      const stats = await this.api.stats();
      this.update(studyComplete(this.state, stats));
    } else {
      this.update(questionLoaded(this.state, view));
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof Error) {
    return err.message;
  }
  return String(err);
}
