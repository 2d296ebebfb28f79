import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { debounce } from "../src/debounce.js";

describe("debounce", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("collapses a burst into one trailing call with the last argument", () => {
    const seen: number[] = [];
    const fn = debounce((g: number) => seen.push(g), 150);
    fn(0.1);
    vi.advanceTimersByTime(50);
    fn(0.2);
    vi.advanceTimersByTime(50);
    fn(0.3);
    expect(seen).toEqual([]);
    vi.advanceTimersByTime(149);
    expect(seen).toEqual([]);
    vi.advanceTimersByTime(1);
    expect(seen).toEqual([0.3]);
  });

  it("fires again for a later burst", () => {
    const seen: number[] = [];
    const fn = debounce((g: number) => seen.push(g), 150);
    fn(1);
    vi.advanceTimersByTime(150);
    fn(2);
    vi.advanceTimersByTime(150);
    expect(seen).toEqual([1, 2]);
  });

  it("cancel drops the pending call", () => {
    const seen: number[] = [];
    const fn = debounce((g: number) => seen.push(g), 150);
    fn(1);
    fn.cancel();
    vi.advanceTimersByTime(500);
    expect(seen).toEqual([]);
    expect(fn.pending()).toBe(false);
  });

  it("flush fires the pending call immediately", () => {
    const seen: number[] = [];
    const fn = debounce((g: number) => seen.push(g), 150);
    fn(7);
    expect(fn.pending()).toBe(true);
    fn.flush();
    expect(seen).toEqual([7]);
    expect(fn.pending()).toBe(false);
    fn.flush();
    expect(seen).toEqual([7]);
  });

  it("uses the ~150 ms default window", () => {
    const seen: number[] = [];
    const fn = debounce((g: number) => seen.push(g));
    fn(5);
    vi.advanceTimersByTime(149);
    expect(seen).toEqual([]);
    vi.advanceTimersByTime(1);
    expect(seen).toEqual([5]);
  });
});
