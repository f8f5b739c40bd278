/**
 * Geometry for the cluster board. Mirrors the server's selection rule:
 * points on a box edge count as inside, points inside any box are rejected.
 */

import { Box, ClusterPoint } from "./api.js";

export function pointInBox(p: { x: number; y: number }, box: Box): boolean {
  // Edges are inclusive, matching the backend.
  return p.x >= box.x0 && p.x <= box.x1 && p.y >= box.y0 && p.y <= box.y1;
}

/** Orders the corners of a drag so x0 <= x1 and y0 <= y1. */
export function normalizeBox(ax: number, ay: number, bx: number, by: number): Box {
  return {
    x0: Math.min(ax, bx),
    y0: Math.min(ay, by),
    x1: Math.max(ax, bx),
    y1: Math.max(ay, by),
  };
}

/** Record ids enclosed by at least one box. */
export function selectedIds(points: ClusterPoint[], boxes: Box[]): Set<string> {
  const ids = new Set<string>();
  for (const p of points) {
    if (boxes.some((b) => pointInBox(p, b))) ids.add(p.record_id);
  }
  return ids;
}

export interface ViewTransform {
  scale: number;
  offsetX: number;
  offsetY: number;
}

/**
 * Fit the embedding's bounding square into a canvas with some padding.
 * Degenerate extents (single point) fall back to unit scale.
 */
export function fitTransform(
  points: ClusterPoint[],
  width: number,
  height: number,
  pad = 20,
): ViewTransform {
  if (points.length === 0) return { scale: 1, offsetX: pad, offsetY: pad };
  const xs = points.map((p) => p.x);
  const ys = points.map((p) => p.y);
  const minX = Math.min(...xs);
  const maxX = Math.max(...xs);
  const minY = Math.min(...ys);
  const maxY = Math.max(...ys);
  const span = Math.max(maxX - minX, maxY - minY);
  const scale = span > 0 ? Math.min(width - 2 * pad, height - 2 * pad) / span : 1;
  return { scale, offsetX: pad - minX * scale, offsetY: pad - minY * scale };
}

export function toCanvas(t: ViewTransform, x: number, y: number): { x: number; y: number } {
  return { x: x * t.scale + t.offsetX, y: y * t.scale + t.offsetY };
}

export function toData(t: ViewTransform, cx: number, cy: number): { x: number; y: number } {
  return { x: (cx - t.offsetX) / t.scale, y: (cy - t.offsetY) / t.scale };
}

/**
 * Drag state for the board. Boxes are accumulated in data coordinates so a
 * selection survives window resizes and re-fits.
 */
export class ClusterBoard {
  boxes: Box[] = [];
  private dragStart: { x: number; y: number } | null = null;

  constructor(public points: ClusterPoint[] = []) {}

  beginDrag(x: number, y: number): void {
    this.dragStart = { x, y };
  }

  /** Box the current drag would commit, for live preview. */
  previewBox(x: number, y: number): Box | null {
    if (!this.dragStart) return null;
    return normalizeBox(this.dragStart.x, this.dragStart.y, x, y);
  }

  /**
   * Finish the drag. Zero-area drags (a plain click) are discarded rather
   * than sent as degenerate boxes.
   */
  endDrag(x: number, y: number): Box | null {
    const box = this.previewBox(x, y);
    this.dragStart = null;
    if (!box) return null;
    if (box.x0 === box.x1 || box.y0 === box.y1) return null;
    this.boxes.push(box);
    return box;
  }

  cancelDrag(): void {
    this.dragStart = null;
  }

  clear(): void {
    this.boxes = [];
  }

  selected(): Set<string> {
    return selectedIds(this.points, this.boxes);
  }
}
