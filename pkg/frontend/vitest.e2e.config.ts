import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    include: ["tests/e2e.test.ts"],
    globalSetup: ["tests/e2e.setup.ts"],
    testTimeout: 120_000,
    hookTimeout: 600_000,
  },
});
