import type { ApiClient } from "./api";
import { ApiError } from "./api";
import { ENVELOPE_C } from "./heatmap";
import type { PatternDoc } from "./types";

// 3x3 pattern editor. The grid and offset are the only authored state;
// everything else round-trips through the documented pattern schema.

export type EditorState = {
  cells: boolean[];
  offsetC: number;
  name: string;
  error: string | null;
};

export class EditorModel {
  private listeners: ((state: EditorState) => void)[] = [];
  private cells: boolean[] = new Array(9).fill(false);
  private offsetC = 8;
  private name = "custom";
  private error: string | null = null;

  onChange(fn: (state: EditorState) => void): void {
    this.listeners.push(fn);
  }

  state(): EditorState {
    return {
      cells: [...this.cells],
      offsetC: this.offsetC,
      name: this.name,
      error: this.error,
    };
  }

  private emit(): void {
    const state = this.state();
    for (const fn of this.listeners) fn(state);
  }

  toggle(index: number): void {
    if (index < 0 || index > 8) return;
    this.cells[index] = !this.cells[index];
    this.validate();
    this.emit();
  }

  setOffset(offsetC: number): void {
    this.offsetC = offsetC;
    this.validate();
    this.emit();
  }

  setName(name: string): void {
    this.name = name.trim() || "custom";
    this.emit();
  }

  loadPattern(doc: PatternDoc): void {
    this.cells = new Array(9).fill(false);
    for (const index of doc.active_cells) this.cells[index] = true;
    this.offsetC = doc.offset_c;
    this.name = doc.name;
    this.validate();
    this.emit();
  }

  activeCells(): number[] {
    const active: number[] = [];
    this.cells.forEach((on, index) => {
      if (on) active.push(index);
    });
    return active;
  }

  private validate(): void {
    if (!Number.isFinite(this.offsetC)) {
      this.error = "offset must be a number";
    } else if (Math.abs(this.offsetC) > ENVELOPE_C) {
      this.error = `offset ${this.offsetC} C outside the ±${ENVELOPE_C} C envelope`;
    } else if (this.activeCells().length === 0) {
      this.error = "select at least one cell";
    } else {
      this.error = null;
    }
  }

  // Serialize to the pattern document schema the service accepts.
  toJson(): PatternDoc {
    this.validate();
    if (this.error) throw new Error(this.error);
    return {
      schema: 1,
      kind: "pattern",
      name: this.name,
      active_cells: this.activeCells(),
      offset_c: this.offsetC,
    };
  }

  async play(api: ApiClient, holdS = 3): Promise<string | null> {
    this.validate();
    if (this.error) {
      this.emit();
      return this.error;
    }
    try {
      await api.playPattern({
        cells: this.activeCells(),
        offset_c: this.offsetC,
        hold_s: holdS,
      });
      return null;
    } catch (err) {
      this.error = err instanceof ApiError ? err.message : String(err);
      this.emit();
      return this.error;
    }
  }
}

export function mountEditor(root: HTMLElement, model: EditorModel, api: ApiClient): void {
  root.innerHTML = `
    <div class="editor-grid"></div>
    <label>offset °C <input class="editor-offset" type="number" step="0.5" value="8"></label>
    <label>name <input class="editor-name" type="text" value="custom"></label>
    <select class="editor-canonical"><option value="">load canonical…</option></select>
    <button class="editor-play">Play</button>
    <div class="editor-error"></div>
  `;
  const grid = root.querySelector(".editor-grid") as HTMLElement;
  const buttons: HTMLButtonElement[] = [];
  for (let i = 0; i < 9; i++) {
    const cell = document.createElement("button");
    cell.className = "editor-cell";
    cell.addEventListener("click", () => model.toggle(i));
    grid.appendChild(cell);
    buttons.push(cell);
  }
  const offset = root.querySelector(".editor-offset") as HTMLInputElement;
  const name = root.querySelector(".editor-name") as HTMLInputElement;
  const canonical = root.querySelector(".editor-canonical") as HTMLSelectElement;
  const play = root.querySelector(".editor-play") as HTMLButtonElement;
  const errorBox = root.querySelector(".editor-error") as HTMLElement;

  offset.addEventListener("input", () => model.setOffset(Number(offset.value)));
  name.addEventListener("input", () => model.setName(name.value));
  play.addEventListener("click", () => void model.play(api));

  let canonicalDocs: PatternDoc[] = [];
  void api.patterns().then((docs) => {
    canonicalDocs = docs;
    for (const doc of docs) {
      const opt = document.createElement("option");
      opt.value = doc.name;
      opt.textContent = doc.name;
      canonical.appendChild(opt);
    }
  });
  canonical.addEventListener("change", () => {
    const doc = canonicalDocs.find((d) => d.name === canonical.value);
    if (doc) model.loadPattern(doc);
  });

  model.onChange((state) => {
    state.cells.forEach((on, i) => buttons[i].classList.toggle("on", on));
    if (String(state.offsetC) !== offset.value) offset.value = String(state.offsetC);
    if (state.name !== name.value) name.value = state.name;
    errorBox.textContent = state.error ?? "";
    play.disabled = state.error !== null;
  });
}
