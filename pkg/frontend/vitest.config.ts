import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
    // The flow test boots the real grading service in a child process.
    testTimeout: 30_000,
    hookTimeout: 30_000,
  },
});
