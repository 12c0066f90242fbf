/**
 * The verdict submit path: optimistic staging, server POST, acknowledge or
 * roll back. Shared by the DOM layer and the tests so both exercise the
 * same behavior.
 */

import type { GradingApi } from "./api.js";
import type { GradingSession, Verdict } from "./session.js";

export interface SubmitResult {
  ok: boolean;
  error?: unknown;
}

export async function submitVerdict(
  api: GradingApi,
  session: GradingSession,
  questionId: string,
  system: string,
  verdict: Verdict,
): Promise<SubmitResult> {
  session.stage(questionId, system, verdict);
  try {
    const stored = await api.submitGrade({
      question_id: questionId,
      system,
      grader_id: session.graderId,
      verdict,
    });
    session.acknowledge(questionId, system, stored.verdict);
    return { ok: true };
  } catch (error) {
    session.markFailed(questionId, system);
    return { ok: false, error };
  }
}

/** Resubmit every failed pick; returns how many are still failing. */
export async function retryFailures(api: GradingApi, session: GradingSession): Promise<number> {
  let remaining = 0;
  for (const failure of session.failures()) {
    const result = await submitVerdict(
      api,
      session,
      failure.questionId,
      failure.system,
      failure.verdict,
    );
    if (!result.ok) remaining += 1;
  }
  return remaining;
}
