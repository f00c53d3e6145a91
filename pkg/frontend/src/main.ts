/** Browser bootstrap: renders the 5x5 grid, wires clicks, prev/next
 * buttons and keyboard shortcuts (arrows navigate, 1/2/3 set the label of
 * the last hovered cell). */

import { httpApi } from "./client.js";
import { LabelingController } from "./controller.js";
import { GRID_CELLS, gridView } from "./grid.js";
import type { DomainLabel } from "./types.js";

const LABEL_KEYS: Record<string, DomainLabel> = {
  "1": "natural",
  "2": "ambiguous",
  "3": "rendition",
};

function bootstrap(): void {
  const params = new URLSearchParams(window.location.search);
  const annotator = params.get("annotator") ?? "default";
  const controller = new LabelingController(httpApi("", annotator), annotator);

  const gridEl = document.getElementById("grid")!;
  const statusEl = document.getElementById("status")!;
  const prevBtn = document.getElementById("prev") as HTMLButtonElement;
  const nextBtn = document.getElementById("next") as HTMLButtonElement;
  let hovered = -1;

  function render(): void {
    const view = gridView(controller.items);
    gridEl.replaceChildren();
    if (view.endOfCorpus) {
      const notice = document.createElement("div");
      notice.className = "notice";
      notice.textContent = "End of corpus - nothing to label at this offset.";
      gridEl.appendChild(notice);
    } else {
      for (const cell of view.cells.slice(0, GRID_CELLS)) {
        const el = document.createElement("div");
        el.className = cell.kind === "empty" ? "cell empty" : "cell";
        if (cell.kind === "item") {
          el.style.borderColor = cell.borderColor ?? "transparent";
          el.title = `id ${cell.id}`;
          if (cell.image && !cell.placeholder) {
            const img = document.createElement("img");
            img.src = cell.image;
            img.onerror = () => {
              controller.imageFailed(cell.index);
              render();
            };
            el.appendChild(img);
          } else {
            el.classList.add("placeholder");
            el.textContent = `#${cell.id}`;
          }
          el.onclick = () => {
            controller.click(cell.index);
            render();
          };
          el.onmouseenter = () => {
            hovered = cell.index;
          };
        }
        gridEl.appendChild(el);
      }
    }
    prevBtn.disabled = !controller.canGoPrev;
    const dirty = controller.dirtyCount;
    const parts = [
      `offset ${controller.offset}`,
      dirty ? `${dirty} unsaved` : "saved",
    ];
    if (controller.status === "error" && controller.lastError) {
      parts.push(controller.lastError);
    }
    statusEl.textContent = parts.join("  |  ");
    statusEl.className = controller.status === "error" ? "status error" : "status";
  }

  async function navigate(direction: "prev" | "next"): Promise<void> {
    await controller.navigate(direction);
    render();
  }

  prevBtn.onclick = () => void navigate("prev");
  nextBtn.onclick = () => void navigate("next");
  document.addEventListener("keydown", (event) => {
    if (event.key === "ArrowLeft") {
      void navigate("prev");
    } else if (event.key === "ArrowRight") {
      void navigate("next");
    } else if (event.key in LABEL_KEYS && hovered >= 0) {
      controller.setLabelAt(hovered, LABEL_KEYS[event.key]);
      render();
    }
  });

  void controller.load(0).then(render);
}

bootstrap();
