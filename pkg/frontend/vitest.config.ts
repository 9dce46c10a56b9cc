import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    include: ["tests/**/*.test.ts"],
    // the e2e test drives a real service process through five rounds
    testTimeout: 180_000,
    hookTimeout: 60_000,
  },
});
