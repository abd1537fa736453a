/** Pure state machine for one participant session.
 *
 * Phases move strictly forward: starting -> question -> submitting ->
 * (question | complete), with error reachable from anywhere. Every
 * transition returns a new state object; callers own rendering.
 */

import type { QuestionView, Stats } from "./api.js";

export type Phase =
  | "starting"
  | "question"
  | "submitting"
  | "complete"
  | "error";

export interface AppState {
  phase: Phase;
  session: string | null;
  view: QuestionView | null;
  selected: string | null;
  votes: number;
  stats: Stats | null;
  error: string | null;
}

export function initialState(): AppState {
  return {
    phase: "starting",
    session: null,
    view: null,
    selected: null,
    votes: 0,
    stats: null,
    error: null,
  };
}

export function sessionStarted(state: AppState, session: string): AppState {
  return { ...state, session };
}

/** A fresh question arrived; selection resets. */
export function questionLoaded(state: AppState, view: QuestionView): AppState {
  return { ...state, phase: "question", view, selected: null };
}

/** Select one candidate; any previous selection is replaced. */
export function candidateSelected(state: AppState, candidateId: string): AppState {
  if (state.phase !== "question" || state.view === null) {
    return state;
  }
  if (!state.view.candidates.some((c) => c.id === candidateId)) {
    return state;
  }
  return { ...state, selected: candidateId };
}

export function canSubmit(state: AppState): boolean {
  return state.phase === "question" && state.selected !== null;
}

/** Lock the UI while the vote is in flight. No-op unless submitable. */
export function submitStarted(state: AppState): AppState {
  if (!canSubmit(state)) {
    return state;
  }
  return { ...state, phase: "submitting" };
}

export function voteAccepted(state: AppState): AppState {
  return { ...state, votes: state.votes + 1 };
}

export function studyComplete(state: AppState, stats: Stats): AppState {
  return { ...state, phase: "complete", view: null, selected: null, stats };
}

export function failed(state: AppState, message: string): AppState {
  return { ...state, phase: "error", error: message };
}

/** Candidate id for a 1-based keyboard digit, or null when not applicable. */
export function candidateForDigit(state: AppState, digit: number): string | null {
  if (state.phase !== "question" || state.view === null) {
    return null;
  }
  const candidate = state.view.candidates[digit - 1];
  return candidate === undefined ? null : candidate.id;
}
