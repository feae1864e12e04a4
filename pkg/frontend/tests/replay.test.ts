import { afterEach, describe, expect, it, vi } from "vitest";

import { CHAT_RESPONSE, CHUNK, ask, chatRoute, mockService, newApp, pickMode,
         rootEl, tick } from "./helpers.js";

afterEach(() => vi.unstubAllGlobals());

/** Drive one full recorded exchange: pick mode, ask, open a citation. */
async function replaySession(): Promise<string> {
  mockService(
    chatRoute(),
    (url) => url.endsWith("/chunks/ck-6") ? { status: 200, body: CHUNK } : undefined,
  );
  newApp();
  pickMode("naive");
  ask(CHAT_RESPONSE.question);
  await tick();
  const chip = rootEl().querySelector(".citation-chip") as HTMLButtonElement;
  chip.click();
  await tick();
  return rootEl().innerHTML;
}

describe("recorded-response replay", () => {
  it("replaying the same responses yields an identical DOM", async () => {
    const first = await replaySession();
    vi.unstubAllGlobals();
    const second = await replaySession();
    expect(second).toBe(first);
  });

  it("matches the stored DOM snapshot", async () => {
    const html = await replaySession();
    expect(html).toMatchSnapshot();
  });
});
