import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    environment: 'jsdom',
    include: ['tests/**/*.test.ts'],
    // the integration test builds a study and spawns the real grading service
    testTimeout: 90_000,
    hookTimeout: 90_000,
  },
});
