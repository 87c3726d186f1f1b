import { defineConfig } from "vitest/config";

// Dev server forwards API and stream traffic to a locally running
// `palmtherm serve` (default port 8732).
const SERVICE = "http://127.0.0.1:8732";

export default defineConfig({
  server: {
    proxy: {
      "/state": SERVICE,
      "/patterns": SERVICE,
      "/session": SERVICE,
      "/response": SERVICE,
      "/stream": { target: SERVICE.replace("http", "ws"), ws: true },
    },
  },
  test: {
    environment: "node",
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
