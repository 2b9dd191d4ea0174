import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    // training blocks the event loop for tens of seconds at a time; forked
    // workers tolerate that where the threaded RPC heartbeat does not
    pool: "forks",
    testTimeout: 600_000,
    hookTimeout: 600_000,
  },
});
