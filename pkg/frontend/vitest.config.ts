import { defineConfig } from "vitest/config";

export default defineConfig({
    test: {
        include: ["tests/**/*.test.ts"],
        // one CPU on the CI box: serialize files so the e2e latency
        // measurements are not fighting a parallel worker
        fileParallelism: false,
        testTimeout: 15_000,
    },
});
