import type { ArrayFrame } from "./types";

// Color scale is fixed to the device envelope: ambient-15 (full blue)
// through ambient (neutral) to ambient+15 (full red).
export const ENVELOPE_C = 15;

function lerp(a: number, b: number, t: number): number {
  return Math.round(a + (b - a) * t);
}

export function cellColor(tempC: number, ambientC: number): string {
  const x = Math.max(-1, Math.min(1, (tempC - ambientC) / ENVELOPE_C));
  const neutral: [number, number, number] = [236, 236, 236];
  const warm: [number, number, number] = [214, 48, 31];
  const cool: [number, number, number] = [33, 102, 172];
  const target = x >= 0 ? warm : cool;
  const t = Math.abs(x);
  const r = lerp(neutral[0], target[0], t);
  const g = lerp(neutral[1], target[1], t);
  const b = lerp(neutral[2], target[2], t);
  return `rgb(${r}, ${g}, ${b})`;
}

export type HeatmapCell = {
  index: number;
  measured: number;
  target: number;
  fill: string;
  targetFill: string;
};

export type HeatmapModel = {
  tick: number;
  mode: string;
  fault: boolean;
  cells: readonly HeatmapCell[];
};

// The model is derived 1:1 from a server frame; the view renders it
// verbatim. `measured` drives the cell fill, `target` the setpoint chip.
export function heatmapModel(frame: Readonly<ArrayFrame>, ambientC: number): HeatmapModel {
  const cells = frame.measured.map((measured, index) => {
    const target = frame.setpoints[index];
    return Object.freeze({
      index,
      measured,
      target,
      fill: cellColor(measured, ambientC),
      targetFill: cellColor(target, ambientC),
    });
  });
  return Object.freeze({
    tick: frame.tick,
    mode: frame.mode,
    fault: frame.fault,
    cells: Object.freeze(cells),
  });
}

export class HeatmapView {
  private cells: HTMLElement[] = [];
  private caption: HTMLElement;

  constructor(
    root: HTMLElement,
    private ambientC: number,
  ) {
    const grid = document.createElement("div");
    grid.className = "heatmap";
    for (let i = 0; i < 9; i++) {
      const cell = document.createElement("div");
      cell.className = "heatmap-cell";
      cell.innerHTML =
        `<span class="cell-measured">--</span>` +
        `<span class="cell-target">--</span>`;
      grid.appendChild(cell);
      this.cells.push(cell);
    }
    this.caption = document.createElement("div");
    this.caption.className = "heatmap-caption";
    root.appendChild(grid);
    root.appendChild(this.caption);
  }

  setAmbient(ambientC: number): void {
    this.ambientC = ambientC;
  }

  update(frame: Readonly<ArrayFrame>): void {
    const model = heatmapModel(frame, this.ambientC);
    for (const cell of model.cells) {
      const el = this.cells[cell.index];
      el.style.background = cell.fill;
      const measured = el.querySelector(".cell-measured") as HTMLElement;
      const target = el.querySelector(".cell-target") as HTMLElement;
      measured.textContent = cell.measured.toFixed(1);
      target.textContent = cell.target.toFixed(1);
      target.style.background = cell.targetFill;
    }
    this.caption.textContent = `tick ${model.tick} | mode ${model.mode}` +
      (model.fault ? " | FAULT" : "");
  }
}
