// Grid model behind the painting canvas. The canvas element is only a view;
// every mutation goes through these pure functions so painting is testable
// without a rendering context.

export interface Brush {
  label: number;
  radius: number;
}

export interface CanvasState {
  resolution: number;
  grid: Uint8Array;
  undoStack: Uint8Array[];
}

export const MAX_UNDO = 50;

export function createCanvas(resolution: number, fillLabel = 0): CanvasState {
  return {
    resolution,
    grid: new Uint8Array(resolution * resolution).fill(fillLabel),
    undoStack: [],
  };
}

function stamp(grid: Uint8Array, resolution: number, x: number, y: number, brush: Brush): void {
  const r = Math.max(0, brush.radius);
  const r2 = r * r;
  for (let dy = -r; dy <= r; dy++) {
    for (let dx = -r; dx <= r; dx++) {
      if (dx * dx + dy * dy > r2) continue;
      const px = x + dx;
      const py = y + dy;
      if (px < 0 || py < 0 || px >= resolution || py >= resolution) continue;
      grid[py * resolution + px] = brush.label;
    }
  }
}

function* linePoints(x0: number, y0: number, x1: number, y1: number): Generator<[number, number]> {
  const steps = Math.max(Math.abs(x1 - x0), Math.abs(y1 - y0), 1);
  for (let i = 0; i <= steps; i++) {
    yield [Math.round(x0 + ((x1 - x0) * i) / steps), Math.round(y0 + ((y1 - y0) * i) / steps)];
  }
}

/** Apply one stroke (a polyline of grid coordinates) as a single undo unit. */
export function applyStroke(
  state: CanvasState,
  points: [number, number][],
  brush: Brush,
): CanvasState {
  if (points.length === 0) return state;
  const grid = state.grid.slice();
  let [px, py] = points[0];
  stamp(grid, state.resolution, px, py, brush);
  for (const [x, y] of points.slice(1)) {
    for (const [lx, ly] of linePoints(px, py, x, y)) {
      stamp(grid, state.resolution, lx, ly, brush);
    }
    [px, py] = [x, y];
  }
  const undoStack = [...state.undoStack, state.grid].slice(-MAX_UNDO);
  return { resolution: state.resolution, grid, undoStack };
}

export function fillAll(state: CanvasState, label: number): CanvasState {
  const undoStack = [...state.undoStack, state.grid].slice(-MAX_UNDO);
  return {
    resolution: state.resolution,
    grid: new Uint8Array(state.resolution * state.resolution).fill(label),
    undoStack,
  };
}

export function undo(state: CanvasState): CanvasState {
  if (state.undoStack.length === 0) return state;
  return {
    resolution: state.resolution,
    grid: state.undoStack[state.undoStack.length - 1],
    undoStack: state.undoStack.slice(0, -1),
  };
}

export function labelCounts(state: CanvasState, numLabels: number): number[] {
  const counts = new Array<number>(numLabels).fill(0);
  for (const v of state.grid) counts[v]++;
  return counts;
}
