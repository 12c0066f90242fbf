/**
 * Typed client for the grading service API. Every field displayed in the UI
 * comes through here; nothing is fabricated client-side.
 */

import type { GradeRecord, Verdict } from "./session.js";

export interface ExampleSummary {
  question_id: string;
  image_id: string;
  question: string;
  gold_answers: string[];
  systems: string[];
}

export interface SystemAnswer {
  system: string;
  rewrite_text: string | null;
  predicted_answer: string;
}

export interface ExampleDetail extends ExampleSummary {
  image_url: string;
  answers: SystemAnswer[];
}

export interface Progress {
  grader_id: string | null;
  total_examples: number;
  total_pairs: number;
  graded_pairs: number;
  fully_graded_examples: number;
  per_system: Record<string, number>;
}

export interface ReportRow {
  system: string;
  section: string;
  train_data: number | null;
  em: number;
  bs: number;
  he: number | null;
}

export interface Report {
  rows: ReportRow[];
  text: string;
}

export interface GradeIn {
  question_id: string;
  system: string;
  grader_id: string;
  verdict: Verdict;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** Minimal storage surface so tests can pass a plain Map-backed fake. */
export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

const GUIDELINES_CACHE_KEY = "rewriteqa.guidelines";

export class GradingApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = (...args) => fetch(...args),
    private readonly cache: KeyValueStore | null = null,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = (await response.json()) as { detail?: unknown };
        if (body && body.detail !== undefined) detail = JSON.stringify(body.detail);
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, `${path}: ${detail}`);
    }
    return (await response.json()) as T;
  }

  examples(): Promise<ExampleSummary[]> {
    return this.request<ExampleSummary[]>("/api/examples");
  }

  example(questionId: string): Promise<ExampleDetail> {
    return this.request<ExampleDetail>(`/api/examples/${encodeURIComponent(questionId)}`);
  }

  grades(graderId?: string): Promise<GradeRecord[]> {
    const query = graderId ? `?grader_id=${encodeURIComponent(graderId)}` : "";
    return this.request<GradeRecord[]>(`/api/grades${query}`);
  }

  submitGrade(grade: GradeIn): Promise<GradeRecord> {
    return this.request<GradeRecord>("/api/grades", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(grade),
    });
  }

  progress(graderId?: string): Promise<Progress> {
    const query = graderId ? `?grader_id=${encodeURIComponent(graderId)}` : "";
    return this.request<Progress>(`/api/progress${query}`);
  }

  report(): Promise<Report> {
    return this.request<Report>("/api/report");
  }

  /** Guidelines text, cached on first load so it stays readable offline. */
  async guidelines(): Promise<string> {
    try {
      const { text } = await this.request<{ text: string }>("/api/guidelines");
      this.cache?.setItem(GUIDELINES_CACHE_KEY, text);
      return text;
    } catch (error) {
      const cached = this.cache?.getItem(GUIDELINES_CACHE_KEY);
      if (cached !== null && cached !== undefined) return cached;
      throw error;
    }
  }
}
