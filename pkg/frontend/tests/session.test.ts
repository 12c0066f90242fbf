import { describe, expect, it } from "vitest";

import {
  GradingSession,
  actionForKey,
  formatProgress,
  seededShuffle,
} from "../src/session.js";

const SYSTEMS = ["agnostic", "aware", "concat", "passthrough"];

describe("seededShuffle", () => {
  it("is a permutation", () => {
    const shuffled = seededShuffle(SYSTEMS, 7);
    expect([...shuffled].sort()).toEqual([...SYSTEMS].sort());
  });

  it("is stable for a fixed seed", () => {
    expect(seededShuffle(SYSTEMS, 41)).toEqual(seededShuffle(SYSTEMS, 41));
  });

  it("varies across seeds", () => {
    const orders = new Set(
      Array.from({ length: 32 }, (_, seed) => seededShuffle(SYSTEMS, seed + 1).join(",")),
    );
    expect(orders.size).toBeGreaterThan(1);
  });

  it("does not mutate its input", () => {
    const input = [...SYSTEMS];
    seededShuffle(input, 3);
    expect(input).toEqual(SYSTEMS);
  });
});

describe("system blinding", () => {
  it("assigns letters A.. in display order", () => {
    const session = new GradingSession("g1", SYSTEMS, 11);
    session.displayOrder.forEach((system, i) => {
      expect(session.label(system)).toBe(String.fromCharCode(65 + i));
    });
  });

  it("labels eight systems A through H", () => {
    const eight = Array.from({ length: 8 }, (_, i) => `system-${i}`);
    const session = new GradingSession("g1", eight, 5);
    expect(session.displayOrder).toHaveLength(8);
    const letters = eight.map((s) => session.label(s)).sort();
    expect(letters).toEqual(["A", "B", "C", "D", "E", "F", "G", "H"]);
  });

  it("keeps the order stable within a session", () => {
    const session = new GradingSession("g1", SYSTEMS, 23);
    expect([...session.displayOrder]).toEqual([...session.displayOrder]);
  });

  it("requires a grader id", () => {
    expect(() => new GradingSession("  ", SYSTEMS, 1)).toThrow(/grader id/);
  });
});

describe("verdict lifecycle", () => {
  it("starts unset", () => {
    const session = new GradingSession("g1", SYSTEMS, 1);
    expect(session.displayedVerdict("q1", "agnostic")).toBeNull();
    expect(session.isUnsaved("q1", "agnostic")).toBe(false);
  });

  it("shows a staged pick optimistically and flags it unsaved", () => {
    const session = new GradingSession("g1", SYSTEMS, 1);
    session.stage("q1", "agnostic", "correct");
    expect(session.displayedVerdict("q1", "agnostic")).toBe("correct");
    expect(session.isUnsaved("q1", "agnostic")).toBe(true);
  });

  it("clears the unsaved flag on acknowledge", () => {
    const session = new GradingSession("g1", SYSTEMS, 1);
    session.stage("q1", "agnostic", "correct");
    session.acknowledge("q1", "agnostic", "correct");
    expect(session.displayedVerdict("q1", "agnostic")).toBe("correct");
    expect(session.isUnsaved("q1", "agnostic")).toBe(false);
  });

  it("rolls the display back on failure but keeps the pick for retry", () => {
    const session = new GradingSession("g1", SYSTEMS, 1);
    session.acknowledge("q1", "agnostic", "incorrect");
    session.stage("q1", "agnostic", "correct");
    session.markFailed("q1", "agnostic");
    expect(session.displayedVerdict("q1", "agnostic")).toBe("incorrect");
    expect(session.isUnsaved("q1", "agnostic")).toBe(true);
    expect(session.failures()).toEqual([
      { questionId: "q1", system: "agnostic", verdict: "correct" },
    ]);
  });

  it("does not let a stale acknowledge clobber a newer pick", () => {
    const session = new GradingSession("g1", SYSTEMS, 1);
    session.stage("q1", "agnostic", "correct");
    session.stage("q1", "agnostic", "incorrect"); // rapid double-submit
    session.acknowledge("q1", "agnostic", "correct"); // first POST lands
    expect(session.displayedVerdict("q1", "agnostic")).toBe("incorrect");
    expect(session.isUnsaved("q1", "agnostic")).toBe(true);
    session.acknowledge("q1", "agnostic", "incorrect"); // second POST lands
    expect(session.displayedVerdict("q1", "agnostic")).toBe("incorrect");
    expect(session.isUnsaved("q1", "agnostic")).toBe(false);
  });

  it("seeds confirmed verdicts from the server log, own grader only", () => {
    const session = new GradingSession("g1", SYSTEMS, 1);
    session.applyServerGrades([
      { question_id: "q1", system: "agnostic", grader_id: "g1", verdict: "correct", timestamp: 1 },
      { question_id: "q1", system: "concat", grader_id: "g2", verdict: "correct", timestamp: 2 },
    ]);
    expect(session.displayedVerdict("q1", "agnostic")).toBe("correct");
    expect(session.displayedVerdict("q1", "concat")).toBeNull();
  });
});

describe("progress formatting", () => {
  it("renders the server counters verbatim", () => {
    expect(formatProgress(181, 363)).toBe("181/363");
    expect(formatProgress(0, 6)).toBe("0/6");
  });
});

describe("keyboard mapping", () => {
  it("maps c/x to verdicts and n/p to navigation", () => {
    expect(actionForKey("c", false)).toEqual({ kind: "verdict", verdict: "correct" });
    expect(actionForKey("x", false)).toEqual({ kind: "verdict", verdict: "incorrect" });
    expect(actionForKey("n", false)).toEqual({ kind: "next" });
    expect(actionForKey("p", false)).toEqual({ kind: "prev" });
    expect(actionForKey("g", false)).toEqual({ kind: "guidelines" });
  });

  it("ignores keys while typing in a text field", () => {
    expect(actionForKey("c", true)).toBeNull();
    expect(actionForKey("n", true)).toBeNull();
  });

  it("ignores unmapped keys", () => {
    expect(actionForKey("z", false)).toBeNull();
    expect(actionForKey("Enter", false)).toBeNull();
  });
});
