/** Pure page-state transitions: UI state is a function of the fetched
 * batch and the click history, nothing else. */

import type { Batch, DomainLabel, LabelRecord, UiItem } from "./types.js";

/** Click order follows the red / green / blue border listing. */
export const CYCLE: readonly DomainLabel[] = ["natural", "ambiguous", "rendition"];

export const BORDER_COLORS: Record<DomainLabel, string> = {
  natural: "red",
  ambiguous: "green",
  rendition: "blue",
};

export function nextLabel(label: DomainLabel): DomainLabel {
  return CYCLE[(CYCLE.indexOf(label) + 1) % CYCLE.length];
}

/** Initial items for a freshly fetched batch: the stored label when one
 * exists, otherwise the classifier pre-label. */
export function itemsFromBatch(batch: Batch): UiItem[] {
  return batch.items.map((item) => ({
    id: item.id,
    image: item.image,
    label: item.label ?? item.prelabel,
    dirty: false,
    broken: false,
  }));
}

export function cycleItem(item: UiItem): UiItem {
  return { ...item, label: nextLabel(item.label), dirty: true };
}

export function setItemLabel(item: UiItem, label: DomainLabel): UiItem {
  return { ...item, label, dirty: true };
}

export function markBroken(item: UiItem): UiItem {
  return { ...item, broken: true };
}

export function dirtyRecords(
  items: readonly UiItem[],
  annotator: string,
  timestamp: number,
): LabelRecord[] {
  return items
    .filter((item) => item.dirty)
    .map((item) => ({ id: item.id, label: item.label, annotator, timestamp }));
}

export function clearDirty(items: readonly UiItem[]): UiItem[] {
  return items.map((item) => (item.dirty ? { ...item, dirty: false } : item));
}
