/** Grid view-model: a fixed 5x5 layout computed from the page items.
 * Kept DOM-free so layout rules are directly testable. */

import { BORDER_COLORS } from "./state.js";
import type { UiItem } from "./types.js";

export const GRID_ROWS = 5;
export const GRID_COLS = 5;
export const GRID_CELLS = GRID_ROWS * GRID_COLS;

export interface CellView {
  kind: "item" | "empty";
  index: number;
  id?: number;
  image?: string | null;
  borderColor?: string;
  placeholder?: boolean;
}

export interface GridView {
  cells: CellView[];
  endOfCorpus: boolean;
}

export function gridView(items: readonly UiItem[]): GridView {
  const cells: CellView[] = [];
  for (let index = 0; index < GRID_CELLS; index++) {
    const item = items[index];
    if (item === undefined) {
      cells.push({ kind: "empty", index });
    } else {
      cells.push({
        kind: "item",
        index,
        id: item.id,
        image: item.broken ? null : item.image,
        borderColor: BORDER_COLORS[item.label],
        placeholder: item.broken || item.image === null,
      });
    }
  }
  return { cells, endOfCorpus: items.length === 0 };
}
