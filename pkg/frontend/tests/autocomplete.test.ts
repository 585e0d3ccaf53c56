import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { Autocomplete, debounce } from "../src/autocomplete.js";

function jsonResponse(body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status: 200,
    headers: { "Content-Type": "application/json" },
  });
}

beforeEach(() => {
  vi.useFakeTimers();
});

afterEach(() => {
  vi.useRealTimers();
  vi.unstubAllGlobals();
});

describe("debounce", () => {
  it("fires once with the last arguments after the wait", () => {
    const fn = vi.fn();
    const debounced = debounce(fn, 100);
    debounced("I");
    debounced("I5");
    debounced("I50");
    vi.advanceTimersByTime(99);
    expect(fn).not.toHaveBeenCalled();
    vi.advanceTimersByTime(1);
    expect(fn).toHaveBeenCalledExactlyOnceWith("I50");
  });
});

describe("Autocomplete", () => {
  function setup(fetchMock: ReturnType<typeof vi.fn>) {
    vi.stubGlobal("fetch", fetchMock);
    const list = document.createElement("ul");
    const onSelect = vi.fn();
    const ac = new Autocomplete("", list, onSelect, 100);
    return { list, onSelect, ac };
  }

  it("debounces typing into a single request for the final prefix", async () => {
    const fetchMock = vi.fn().mockResolvedValue(jsonResponse({ results: [] }));
    const { ac } = setup(fetchMock);

    ac.onQuery("I");
    ac.onQuery("I5");
    ac.onQuery("I50");
    await vi.advanceTimersByTimeAsync(100);

    expect(fetchMock).toHaveBeenCalledOnce();
    expect(fetchMock.mock.calls[0][0]).toContain("q=I50");
  });

  it("renders code and description for each suggestion", async () => {
    const fetchMock = vi.fn().mockResolvedValue(
      jsonResponse({
        results: [
          { code: "I500", description: "heart failure" },
          { code: "I509", description: "heart failure, unspecified" },
        ],
      }),
    );
    const { ac, list } = setup(fetchMock);

    ac.onQuery("I50");
    await vi.advanceTimersByTimeAsync(100);

    const items = [...list.querySelectorAll("li")];
    expect(items).toHaveLength(2);
    expect(items[0].textContent).toContain("I500");
    expect(items[0].textContent).toContain("heart failure");
    expect(list.hidden).toBe(false);
  });

  it("renders an empty, hidden list for an unknown prefix", async () => {
    const fetchMock = vi.fn().mockResolvedValue(jsonResponse({ results: [] }));
    const { ac, list } = setup(fetchMock);

    ac.onQuery("ZZZ");
    await vi.advanceTimersByTimeAsync(100);

    expect(list.childElementCount).toBe(0);
    expect(list.hidden).toBe(true);
  });

  it("stays silent on network failure", async () => {
    const fetchMock = vi.fn().mockRejectedValue(new Error("offline"));
    const { ac, list } = setup(fetchMock);
    list.innerHTML = "<li class='suggestion'>stale</li>";

    ac.onQuery("I50");
    await vi.advanceTimersByTimeAsync(100);
    await vi.runAllTimersAsync();

    // no throw, and the previous content is left alone
    expect(list.textContent).toContain("stale");
  });

  it("selecting a suggestion reports the code and clears the list", async () => {
    const fetchMock = vi
      .fn()
      .mockResolvedValue(jsonResponse({ results: [{ code: "I500", description: "hf" }] }));
    const { ac, list, onSelect } = setup(fetchMock);

    ac.onQuery("I50");
    await vi.advanceTimersByTimeAsync(100);
    list.querySelector<HTMLElement>(".suggestion")!.click();

    expect(onSelect).toHaveBeenCalledExactlyOnceWith("I500");
    expect(list.childElementCount).toBe(0);
  });
});
