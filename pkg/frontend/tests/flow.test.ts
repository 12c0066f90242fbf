/**
 * End-to-end grading flow against the real Python service. A child process
 * serves the three fixture examples; the test drives the same api/session/flow
 * modules the browser uses and checks the server-side report numbers.
 */

import { type ChildProcess, spawn } from "node:child_process";
import { mkdtemp, rm } from "node:fs/promises";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { GradingApi } from "../src/api.js";
import { retryFailures, submitVerdict } from "../src/flow.js";
import { GradingSession, type Verdict, formatProgress } from "../src/session.js";

const HERE = dirname(fileURLToPath(import.meta.url));
const SYSTEMS = ["agnostic", "concat"];

let child: ChildProcess | undefined;
let workDir: string | undefined;
let baseUrl = "";

function waitForPortLine(proc: ChildProcess): Promise<number> {
  return new Promise((resolve, reject) => {
    let buffer = "";
    const timer = setTimeout(() => reject(new Error("server never reported a port")), 25_000);
    proc.stdout?.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      const newline = buffer.indexOf("\n");
      if (newline < 0) return;
      clearTimeout(timer);
      try {
        resolve((JSON.parse(buffer.slice(0, newline)) as { port: number }).port);
      } catch (error) {
        reject(error);
      }
    });
    proc.on("error", (error) => {
      clearTimeout(timer);
      reject(error);
    });
    proc.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`server exited before reporting a port (code ${code})`));
    });
  });
}

async function waitForReady(url: string): Promise<void> {
  const deadline = Date.now() + 25_000;
  let lastError: unknown;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${url}/api/examples`);
      if (response.ok) return;
    } catch (error) {
      lastError = error;
    }
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
  throw new Error(`grading server never became ready: ${String(lastError)}`);
}

beforeAll(async () => {
  workDir = await mkdtemp(join(tmpdir(), "grading-ui-"));
  child = spawn("python3", [join(HERE, "server.py"), join(workDir, "grades.jsonl")], {
    cwd: join(HERE, "..", ".."),
    stdio: ["ignore", "pipe", "inherit"],
  });
  const port = await waitForPortLine(child);
  baseUrl = `http://127.0.0.1:${port}`;
  await waitForReady(baseUrl);
});

afterAll(async () => {
  if (child && child.exitCode === null) {
    child.kill("SIGTERM");
    await new Promise((resolve) => child?.once("exit", resolve));
  }
  if (workDir) await rm(workDir, { recursive: true, force: true });
});

describe("grading the fixture examples end to end", () => {
  it("serves all three examples with per-system answers", async () => {
    const api = new GradingApi(baseUrl);
    const summaries = await api.examples();
    expect(summaries.map((s) => s.question_id).sort()).toEqual([
      "q-giraffe",
      "q-kite",
      "q-zebra",
    ]);
    expect(summaries[0]?.systems).toEqual(SYSTEMS);

    const detail = await api.example("q-giraffe");
    expect(detail.image_url).toBe(`/api/images/${detail.image_id}`);
    const bySystem = new Map(detail.answers.map((a) => [a.system, a]));
    expect(bySystem.get("agnostic")?.predicted_answer).toBe(detail.gold_answers[0]);
    expect(bySystem.get("agnostic")?.rewrite_text).toBe("how tall is giraffe on average");
    expect(bySystem.get("concat")?.predicted_answer).toBe("unknown");
  });

  it("produces the hand-computed HE fractions in the report", async () => {
    const api = new GradingApi(baseUrl);
    const g1 = new GradingSession("g1", SYSTEMS, 7);
    const g2 = new GradingSession("g2", SYSTEMS, 9);

    const picks: Array<[GradingSession, string, string, Verdict]> = [
      [g1, "q-giraffe", "agnostic", "correct"],
      [g2, "q-giraffe", "agnostic", "correct"],
      [g1, "q-zebra", "agnostic", "correct"],
      [g2, "q-zebra", "agnostic", "incorrect"],
      [g1, "q-kite", "agnostic", "correct"],
      [g1, "q-giraffe", "concat", "incorrect"],
      [g1, "q-zebra", "concat", "incorrect"],
      [g1, "q-kite", "concat", "incorrect"],
    ];
    for (const [session, questionId, system, verdict] of picks) {
      const result = await submitVerdict(api, session, questionId, system, verdict);
      expect(result.ok).toBe(true);
      expect(session.displayedVerdict(questionId, system)).toBe(verdict);
      expect(session.isUnsaved(questionId, system)).toBe(false);
    }

    // g1 reconsiders the kite answer; only the latest verdict may count.
    const revision = await submitVerdict(api, g1, "q-kite", "agnostic", "incorrect");
    expect(revision.ok).toBe(true);

    const report = await api.report();
    const rows = new Map(report.rows.map((row) => [row.system, row]));
    // agnostic: giraffe 2/2 correct, zebra 1/2, kite 0/1 -> (1 + 0.5 + 0) / 3
    expect(rows.get("agnostic")?.he).toBe(0.5);
    // concat: every verdict incorrect
    expect(rows.get("concat")?.he).toBe(0.0);
    // automatic metrics on the fixture predictions
    expect(rows.get("agnostic")?.em).toBe(1.0);
    expect(rows.get("concat")?.em).toBe(0.0);
    expect(report.text).toContain("agnostic");
  });

  it("keeps verdicts across a reload and collapses revisions", async () => {
    const api = new GradingApi(baseUrl);
    const reloaded = new GradingSession("g1", SYSTEMS, 1234);
    reloaded.applyServerGrades(await api.grades("g1"));

    expect(reloaded.displayedVerdict("q-giraffe", "agnostic")).toBe("correct");
    expect(reloaded.displayedVerdict("q-zebra", "agnostic")).toBe("correct");
    expect(reloaded.displayedVerdict("q-kite", "agnostic")).toBe("incorrect");
    expect(reloaded.displayedVerdict("q-kite", "concat")).toBe("incorrect");
    expect(reloaded.isUnsaved("q-giraffe", "agnostic")).toBe(false);

    // one latest record per (question, system, grader): 5 agnostic + 3 concat
    const all = await api.grades();
    expect(all).toHaveLength(8);
    const kite = all.filter((g) => g.question_id === "q-kite" && g.system === "agnostic");
    expect(kite).toHaveLength(1);
    expect(kite[0]?.verdict).toBe("incorrect");
  });

  it("reports full progress for the grader who covered every pair", async () => {
    const api = new GradingApi(baseUrl);
    const progress = await api.progress("g1");
    expect(progress.total_examples).toBe(3);
    expect(progress.total_pairs).toBe(6);
    expect(progress.graded_pairs).toBe(6);
    expect(progress.fully_graded_examples).toBe(3);
    expect(progress.per_system).toEqual({ agnostic: 3, concat: 3 });
    expect(formatProgress(progress.graded_pairs, progress.total_pairs)).toBe("6/6");
  });

  it("serves guidelines containing the numeric-window rule", async () => {
    const api = new GradingApi(baseUrl);
    const text = await api.guidelines();
    expect(text).toContain("19th century for 1890");
  });

  it("rolls back on a dropped POST and recovers via retry", async () => {
    let dropped = false;
    const flaky: typeof fetch = (input, init) => {
      if (!dropped && init?.method === "POST") {
        dropped = true;
        return Promise.reject(new Error("connection reset"));
      }
      return fetch(input, init);
    };
    const api = new GradingApi(baseUrl, flaky);
    const session = new GradingSession("g3", SYSTEMS, 3);

    const first = await submitVerdict(api, session, "q-giraffe", "concat", "incorrect");
    expect(first.ok).toBe(false);
    expect(session.displayedVerdict("q-giraffe", "concat")).toBeNull();
    expect(session.isUnsaved("q-giraffe", "concat")).toBe(true);
    expect(session.failures()).toHaveLength(1);

    expect(await retryFailures(api, session)).toBe(0);
    expect(session.displayedVerdict("q-giraffe", "concat")).toBe("incorrect");
    expect(session.isUnsaved("q-giraffe", "concat")).toBe(false);
  });
});
