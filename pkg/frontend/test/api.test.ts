import { describe, expect, it } from "vitest";

import { ApiError, StudioApi } from "../src/api.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

interface Call {
  url: string;
  init?: RequestInit;
}

function recordingApi(reply: (url: string) => Response) {
  const calls: Call[] = [];
  const api = new StudioApi("", async (url, init) => {
    calls.push({ url, init });
    return reply(url);
  });
  return { api, calls };
}

describe("StudioApi", () => {
  it("posts JSON bodies with the wire field names", async () => {
    const { api, calls } = recordingApi(() => jsonResponse({ images: ["x"], gammas: [1], seed: 3 }));
    await api.apply({ seed: 3, gammas: [1], direction_id: "abc", layers: [0, 2] });
    expect(calls).toHaveLength(1);
    expect(calls[0].url).toBe("/apply");
    expect(calls[0].init?.method).toBe("POST");
    const body = JSON.parse(String(calls[0].init?.body));
    expect(body).toEqual({ seed: 3, gammas: [1], direction_id: "abc", layers: [0, 2] });
  });

  it("gets /health and /directions without a body", async () => {
    const { api, calls } = recordingApi(url =>
      url === "/health" ? jsonResponse({ status: "ok" }) : jsonResponse({ directions: [] }),
    );
    await api.health();
    await api.directions();
    expect(calls.map(c => c.url)).toEqual(["/health", "/directions"]);
    expect(calls[0].init?.body).toBeUndefined();
    expect(calls[0].init?.method).toBe("GET");
  });

  it("prefixes a configured base URL", async () => {
    const calls: Call[] = [];
    const api = new StudioApi("http://box:9000/", async (url, init) => {
      calls.push({ url, init });
      return jsonResponse({ image: "i", code: [], seed: 1, resolution: 16 });
    });
    await api.generate(1);
    expect(calls[0].url).toBe("http://box:9000/generate");
  });

  it("surfaces the service error envelope as ApiError", async () => {
    const { api } = recordingApi(() =>
      jsonResponse({ errors: [{ field: "layers", message: "unknown layer 7" }] }, 400),
    );
    const err = await api.apply({ seed: 0, gammas: [1], direction_id: "x" }).catch(e => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(400);
    expect(err.field).toBe("layers");
    expect(err.message).toBe("unknown layer 7");
  });

  it("falls back to the status line when the error body is not JSON", async () => {
    const api = new StudioApi("", async () => new Response("boom", { status: 502, statusText: "Bad Gateway" }));
    const err = await api.health().catch(e => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(502);
    expect(err.field).toBe("");
    expect(err.message).toContain("502");
  });

  it("wraps a bare recipe for /replay", async () => {
    const { api, calls } = recordingApi(() => jsonResponse({ images: [], gammas: [] }));
    const recipe = {
      format_version: 1,
      kind: "edit-recipe",
      model_hash: "h",
      seed: 1,
      gammas: [0],
      weights: [1],
      directions: [],
    };
    await api.replay(recipe);
    const body = JSON.parse(String(calls[0].init?.body));
    expect(body.recipe.kind).toBe("edit-recipe");
  });
});
