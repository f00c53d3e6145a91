/** Page controller: click handling plus flush-then-navigate.
 *
 * All dirty labels are POSTed before the adjacent batch is fetched; a
 * failed save blocks navigation and keeps every dirty label in place, so
 * no mutation is ever dropped.
 */

import {
  clearDirty,
  cycleItem,
  dirtyRecords,
  itemsFromBatch,
  markBroken,
  setItemLabel,
} from "./state.js";
import type { Batch, DomainLabel, LabelRecord, UiItem } from "./types.js";

export interface Api {
  fetchBatch(offset: number): Promise<Batch>;
  postLabels(records: LabelRecord[]): Promise<number>;
}

export const PAGE_SIZE = 25;

export type Status = "idle" | "saving" | "error";

export class LabelingController {
  offset = 0;
  items: UiItem[] = [];
  status: Status = "idle";
  lastError: string | null = null;

  constructor(
    private readonly api: Api,
    private readonly annotator: string = "default",
    private readonly now: () => number = () => Date.now() / 1000,
  ) {}

  get endOfCorpus(): boolean {
    return this.items.length === 0;
  }

  get canGoPrev(): boolean {
    return this.offset > 0;
  }

  get dirtyCount(): number {
    return this.items.filter((item) => item.dirty).length;
  }

  async load(offset: number): Promise<void> {
    const batch = await this.api.fetchBatch(offset);
    this.offset = batch.offset;
    this.items = itemsFromBatch(batch);
    this.status = "idle";
    this.lastError = null;
  }

  /** Click on a cell (placeholder or not): the label cycles. */
  click(index: number): void {
    const item = this.items[index];
    if (item !== undefined) {
      this.items[index] = cycleItem(item);
    }
  }

  /** Keyboard shortcut path: set the label directly. */
  setLabelAt(index: number, label: DomainLabel): void {
    const item = this.items[index];
    if (item !== undefined) {
      this.items[index] = setItemLabel(item, label);
    }
  }

  imageFailed(index: number): void {
    const item = this.items[index];
    if (item !== undefined) {
      this.items[index] = markBroken(item);
    }
  }

  /** POST every dirty label; on failure the dirty state is untouched. */
  async flush(): Promise<void> {
    const records = dirtyRecords(this.items, this.annotator, this.now());
    if (records.length === 0) {
      return;
    }
    await this.api.postLabels(records);
    this.items = clearDirty(this.items);
  }

  /** Persist, then move to the adjacent page. Returns false when blocked:
   * prev at the first page, or a failed save (labels retained). */
  async navigate(direction: "prev" | "next"): Promise<boolean> {
    if (direction === "prev" && !this.canGoPrev) {
      return false;
    }
    this.status = "saving";
    try {
      await this.flush();
    } catch (error) {
      this.status = "error";
      this.lastError = `saving labels failed, nothing was lost - retry: ${String(error)}`;
      return false;
    }
    const target =
      direction === "next" ? this.offset + PAGE_SIZE : Math.max(0, this.offset - PAGE_SIZE);
    try {
      await this.load(target);
    } catch (error) {
      this.status = "error";
      this.lastError = `loading page failed - retry: ${String(error)}`;
      return false;
    }
    return true;
  }
}
