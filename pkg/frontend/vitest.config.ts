import { defineConfig } from "vitest/config";

// e2e needs a live controller process; it runs via vitest.e2e.config.ts
export default defineConfig({
  test: {
    environment: "node",
    include: ["test/**/*.test.ts"],
    exclude: ["test/e2e.test.ts", "**/node_modules/**"],
  },
});
