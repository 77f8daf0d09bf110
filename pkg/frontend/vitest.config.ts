import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    include: ["tests/**/*.test.ts"],
    // The live test drives a real training checkpoint through a spawned
    // service process; model startup dominates, not the assertions.
    testTimeout: 180_000,
    hookTimeout: 120_000,
  },
});
