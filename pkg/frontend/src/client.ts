/** fetch-backed API client for the annotation server. */

import type { Api } from "./controller.js";
import type { Batch, LabelRecord } from "./types.js";

export function httpApi(base = "", annotator?: string): Api {
  const batchQuery = (offset: number) =>
    annotator
      ? `offset=${offset}&annotator=${encodeURIComponent(annotator)}`
      : `offset=${offset}`;
  return {
    async fetchBatch(offset: number): Promise<Batch> {
      const response = await fetch(`${base}/api/batch?${batchQuery(offset)}`);
      if (!response.ok) {
        throw new Error(`GET /api/batch -> ${response.status}`);
      }
      return (await response.json()) as Batch;
    },
    async postLabels(records: LabelRecord[]): Promise<number> {
      const response = await fetch(`${base}/api/labels`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(records),
      });
      if (!response.ok) {
        throw new Error(`POST /api/labels -> ${response.status}`);
      }
      const body = (await response.json()) as { persisted: number };
      return body.persisted;
    },
  };
}
