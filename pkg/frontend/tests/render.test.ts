import { describe, expect, it } from "vitest";

import type { QuestionView, Stats } from "../src/api.js";
import {
  escapeHtml,
  formatPercentage,
  renderApp,
  renderProgress,
  renderQuestion,
  renderStats,
} from "../src/render.js";
import {
  candidateSelected,
  initialState,
  questionLoaded,
  sessionStarted,
  submitStarted,
} from "../src/state.js";

function sampleView(): QuestionView {
  return {
    question: "q0001",
    inputUrl: "/api/sample-image?session=s1&question=q0001&kind=input",
    truthUrl: "/api/sample-image?session=s1&question=q0001&kind=truth",
    candidates: Array.from({ length: 6 }, (_, i) => ({
      id: `c${i + 1}`,
      url: `/api/candidate-image?session=s1&question=q0001&id=c${i + 1}`,
    })),
    progress: { answered: 0, total: 3 },
  };
}

function questionState(selected: string | null = null) {
  let state = questionLoaded(sessionStarted(initialState(), "s1"), sampleView());
  if (selected !== null) {
    state = candidateSelected(state, selected);
  }
  return state;
}

describe("percentage formatting", () => {
  it("renders two decimals with a percent sign", () => {
    expect(formatPercentage(60.49)).toBe("60.49%");
    expect(formatPercentage(0)).toBe("0.00%");
    expect(formatPercentage(100)).toBe("100.00%");
    expect(formatPercentage(33.333)).toBe("33.33%");
  });
});

describe("stats table", () => {
  it("shows one row per model with vote share", () => {
    const stats: Stats = {
      total: 81,
      models: [
        { model: "atlas-translator", count: 49, percentage: 60.49 },
        { model: "basalt-gan", count: 20, percentage: 24.69 },
        { model: "cairn-baseline", count: 12, percentage: 14.81 },
      ],
    };
    const html = renderStats(stats);
    expect(html).toContain("60.49%");
    expect(html).toContain("24.69%");
    expect(html).toContain("atlas-translator");
    expect(html).toContain("<td>49</td>");
    expect(html).toContain("81 votes recorded");
  });
});

describe("question markup", () => {
  it("disables submit until a candidate is selected", () => {
    const before = renderQuestion(questionState());
    expect(before).toContain('id="submit"');
    expect(before).toMatch(/<button id="submit"[^>]* disabled>/);

    const after = renderQuestion(questionState("c2"));
    expect(after).not.toMatch(/<button id="submit"[^>]* disabled>/);
  });

  it("marks exactly the selected candidate", () => {
    const html = renderQuestion(questionState("c4"));
    const selectedTags = html.match(/class="candidate selected"/g) ?? [];
    expect(selectedTags).toHaveLength(1);
    expect(html).toContain('class="candidate selected" data-candidate="c4"');
  });

  it("shows all six candidates with keyboard hints", () => {
    const html = renderQuestion(questionState());
    for (let i = 1; i <= 6; i += 1) {
      expect(html).toContain(`data-candidate="c${i}"`);
      expect(html).toContain(`<kbd>${i}</kbd>`);
    }
    expect(html).toContain("kind=input");
    expect(html).toContain("kind=truth");
  });

  it("renders the progress counter", () => {
    expect(renderProgress(0, 3)).toContain("Question 1 of 3");
    expect(renderProgress(2, 3)).toContain("Question 3 of 3");
    expect(renderQuestion(questionState())).toContain("Question 1 of 3");
  });

  it("locks the submit button while a vote is in flight", () => {
    const html = renderQuestion(submitStarted(questionState("c1")));
    expect(html).toMatch(/<button id="submit"[^>]* disabled>/);
    expect(html).toContain("Submitting");
  });
});

describe("top-level dispatch", () => {
  it("covers every phase", () => {
    expect(renderApp(initialState())).toContain("Loading");
    expect(renderApp(questionState())).toContain("candidates");
    const complete = {
      ...initialState(),
      phase: "complete" as const,
      stats: { total: 1, models: [{ model: "m", count: 1, percentage: 100 }] },
    };
    expect(renderApp(complete)).toContain("All done");
    const errored = { ...initialState(), phase: "error" as const, error: "boom" };
    expect(renderApp(errored)).toContain("boom");
  });

  it("escapes interpolated text", () => {
    expect(escapeHtml('<img src="x">')).toBe("&lt;img src=&quot;x&quot;&gt;");
    const errored = { ...initialState(), phase: "error" as const, error: "<script>" };
    expect(renderApp(errored)).not.toContain("<script>");
  });
});
