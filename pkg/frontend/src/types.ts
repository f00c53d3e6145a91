/** Wire types of the annotation server's JSON API. */

export type DomainLabel = "natural" | "ambiguous" | "rendition";

export interface BatchItem {
  id: number;
  image: string | null;
  prelabel: DomainLabel;
  label: DomainLabel | null;
}

export interface Batch {
  offset: number;
  items: BatchItem[];
}

export interface LabelRecord {
  id: number;
  label: DomainLabel;
  annotator: string;
  timestamp: number;
}

/** One grid cell's state. The border color is derived solely from label. */
export interface UiItem {
  id: number;
  image: string | null;
  label: DomainLabel;
  dirty: boolean;
  /** image failed to load; the cell renders as a placeholder but stays labelable */
  broken: boolean;
}
