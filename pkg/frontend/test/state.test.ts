import { describe, expect, it } from "vitest";

import {
  BORDER_COLORS,
  CYCLE,
  clearDirty,
  cycleItem,
  dirtyRecords,
  itemsFromBatch,
  nextLabel,
} from "../src/state.js";
import { GRID_CELLS, gridView } from "../src/grid.js";
import type { Batch, UiItem } from "../src/types.js";

function item(overrides: Partial<UiItem> = {}): UiItem {
  return { id: 1, image: "/img/1", label: "natural", dirty: false, broken: false, ...overrides };
}

describe("label cycle", () => {
  it("advances natural -> ambiguous -> rendition -> natural", () => {
    expect(nextLabel("natural")).toBe("ambiguous");
    expect(nextLabel("ambiguous")).toBe("rendition");
    expect(nextLabel("rendition")).toBe("natural");
  });

  it("has period 3 and marks the item dirty", () => {
    let current = item();
    for (let i = 0; i < 3; i++) {
      current = cycleItem(current);
    }
    expect(current.label).toBe("natural");
    expect(current.dirty).toBe(true);
  });

  it("cycles placeholder cells identically", () => {
    const broken = cycleItem(item({ broken: true, image: null }));
    expect(broken.label).toBe("ambiguous");
    expect(broken.dirty).toBe(true);
  });
});

describe("border colors", () => {
  it("derive solely from the label: red/green/blue", () => {
    expect(BORDER_COLORS.natural).toBe("red");
    expect(BORDER_COLORS.ambiguous).toBe("green");
    expect(BORDER_COLORS.rendition).toBe("blue");
    expect(CYCLE).toEqual(["natural", "ambiguous", "rendition"]);
  });
});

describe("items from a batch", () => {
  const batch: Batch = {
    offset: 0,
    items: [
      { id: 1, image: "/img/1", prelabel: "natural", label: null },
      { id: 2, image: null, prelabel: "ambiguous", label: "rendition" },
    ],
  };

  it("uses the stored label when present, else the prelabel", () => {
    const items = itemsFromBatch(batch);
    expect(items[0].label).toBe("natural");
    expect(items[1].label).toBe("rendition");
    expect(items.every((i) => !i.dirty)).toBe(true);
  });
});

describe("dirty tracking", () => {
  it("collects exactly the dirty items into label records", () => {
    const items = [item({ id: 1 }), cycleItem(item({ id: 2 })), item({ id: 3 })];
    const records = dirtyRecords(items, "alice", 42);
    expect(records).toEqual([{ id: 2, label: "ambiguous", annotator: "alice", timestamp: 42 }]);
    const cleaned = clearDirty(items);
    expect(dirtyRecords(cleaned, "alice", 43)).toEqual([]);
  });
});

describe("grid view", () => {
  it("renders 25 populated cells for a full batch", () => {
    const items = Array.from({ length: 25 }, (_, i) => item({ id: i }));
    const view = gridView(items);
    expect(view.cells).toHaveLength(GRID_CELLS);
    expect(view.cells.every((c) => c.kind === "item")).toBe(true);
    expect(view.endOfCorpus).toBe(false);
  });

  it("leaves empty cells for a partial batch", () => {
    const items = Array.from({ length: 10 }, (_, i) => item({ id: i }));
    const view = gridView(items);
    expect(view.cells.filter((c) => c.kind === "item")).toHaveLength(10);
    expect(view.cells.filter((c) => c.kind === "empty")).toHaveLength(15);
  });

  it("flags the end of the corpus for an empty batch", () => {
    expect(gridView([]).endOfCorpus).toBe(true);
  });

  it("renders broken images as labelable placeholders with their border", () => {
    const broken = { ...cycleItem(item({ id: 9 })), broken: true };
    const view = gridView([broken]);
    expect(view.cells[0].placeholder).toBe(true);
    expect(view.cells[0].borderColor).toBe("green");
  });
});
