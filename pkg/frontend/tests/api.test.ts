import { describe, expect, it } from "vitest";
import { ApiClient, ApiError, FetchLike } from "../src/api.js";

function fakeFetch(
  handler: (url: string, init?: RequestInit) => { status: number; body?: unknown },
): { fetch: FetchLike; calls: Array<{ url: string; init?: RequestInit }> } {
  const calls: Array<{ url: string; init?: RequestInit }> = [];
  const fetch: FetchLike = async (url, init) => {
    calls.push({ url, init });
    const { status, body } = handler(url, init);
    return new Response(body === undefined ? null : JSON.stringify(body), {
      status,
      headers: { "content-type": "application/json" },
    });
  };
  return { fetch, calls };
}

describe("ApiClient", () => {
  it("builds run-scoped urls and percent-encodes the id", async () => {
    const { fetch, calls } = fakeFetch(() => ({
      status: 200,
      body: { run_id: "a b", state: "done" },
    }));
    const api = new ApiClient("a b", "", fetch);
    await api.run();
    expect(calls[0]?.url).toBe("/runs/a%20b");
  });

  it("passes the pending limit as a query parameter", async () => {
    const { fetch, calls } = fakeFetch(() => ({
      status: 200,
      body: { stage: "augment", pairs: [] },
    }));
    const api = new ApiClient("r1", "", fetch);
    const payload = await api.pending(7);
    expect(calls[0]?.url).toBe("/runs/r1/pending?limit=7");
    expect(payload.pairs).toEqual([]);
    await api.pending();
    expect(calls[1]?.url).toBe("/runs/r1/pending");
  });

  it("maps feedback 204 to stored and 409 to duplicate", async () => {
    let status = 204;
    const { fetch, calls } = fakeFetch(() => ({ status }));
    const api = new ApiClient("r1", "", fetch);
    expect(await api.feedback("rec-1", "true_counterfactual")).toBe("stored");
    status = 409;
    expect(await api.feedback("rec-1", "false_counterfactual")).toBe("duplicate");
    const body = JSON.parse(String(calls[0]?.init?.body));
    expect(body).toEqual({
      record_id: "rec-1",
      judgment: "true_counterfactual",
      source: "human",
    });
  });

  it("raises ApiError with the status for other feedback codes", async () => {
    const { fetch } = fakeFetch(() => ({ status: 404 }));
    const api = new ApiClient("r1", "", fetch);
    await expect(api.feedback("gone", "true_counterfactual")).rejects.toMatchObject({
      name: "ApiError",
      status: 404,
    });
  });

  it("returns null from clusters on 404 (not yet published)", async () => {
    const { fetch } = fakeFetch(() => ({ status: 404 }));
    const api = new ApiClient("r1", "", fetch);
    expect(await api.clusters()).toBeNull();
  });

  it("parses a published cluster payload", async () => {
    const payload = {
      seed: 3,
      points: [{ record_id: "a", x: 0.1, y: -2, label: 1, judged: false }],
    };
    const { fetch } = fakeFetch(() => ({ status: 200, body: payload }));
    const api = new ApiClient("r1", "", fetch);
    expect(await api.clusters()).toEqual(payload);
  });

  it("posts cluster boxes and returns created/skipped counts", async () => {
    const { fetch, calls } = fakeFetch(() => ({
      status: 200,
      body: { created: 2, skipped: 1 },
    }));
    const api = new ApiClient("r1", "", fetch);
    const res = await api.clusterSelection([{ x0: 0, y0: 0, x1: 1, y1: 1 }]);
    expect(res).toEqual({ created: 2, skipped: 1 });
    const body = JSON.parse(String(calls[0]?.init?.body));
    expect(body.boxes).toHaveLength(1);
    expect(body.source).toBeUndefined();
  });

  it("propagates http errors from GET endpoints as ApiError", async () => {
    const { fetch } = fakeFetch(() => ({ status: 500 }));
    const api = new ApiClient("r1", "", fetch);
    await expect(api.metrics()).rejects.toBeInstanceOf(ApiError);
  });

  it("honors a non-empty base url", async () => {
    const { fetch, calls } = fakeFetch(() => ({
      status: 200,
      body: { run_id: "r1", state: "done" },
    }));
    const api = new ApiClient("r1", "http://host:8765", fetch);
    await api.run();
    expect(calls[0]?.url).toBe("http://host:8765/runs/r1");
  });
});
