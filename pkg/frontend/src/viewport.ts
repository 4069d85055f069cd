// Camera over level-0 image space plus pyramid level selection and tile
// enumeration. zoom = screen pixels per level-0 pixel.

import type { DatasetMeta } from './types.js';

export interface LevelRect {
  level: number;
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export interface TileCoord {
  level: number;
  tx: number;
  ty: number;
}

const MIN_ZOOM = 1 / 4096;
const MAX_ZOOM = 64;

export class Camera {
  centerX: number;
  centerY: number;
  zoom: number;
  screenW: number;
  screenH: number;

  constructor(meta: DatasetMeta, screenW: number, screenH: number) {
    this.centerX = meta.width_px / 2;
    this.centerY = meta.height_px / 2;
    this.screenW = screenW;
    this.screenH = screenH;
    // start fully zoomed out
    this.zoom = Math.min(screenW / meta.width_px, screenH / meta.height_px);
  }

  setScreenSize(w: number, h: number): void {
    this.screenW = w;
    this.screenH = h;
  }

  setPose(centerX: number, centerY: number, zoom: number): void {
    this.centerX = centerX;
    this.centerY = centerY;
    this.zoom = clampZoom(zoom);
  }

  /** Coarsest level whose pixels are at least one screen pixel wide. */
  levelFor(meta: DatasetMeta): number {
    const ideal = Math.ceil(Math.log2(1 / this.zoom) - 1e-9);
    return Math.min(Math.max(ideal, 0), meta.levels - 1);
  }

  screenToImage(sx: number, sy: number): [number, number] {
    return [
      this.centerX + (sx - this.screenW / 2) / this.zoom,
      this.centerY + (sy - this.screenH / 2) / this.zoom,
    ];
  }

  imageToScreen(x: number, y: number): [number, number] {
    return [
      (x - this.centerX) * this.zoom + this.screenW / 2,
      (y - this.centerY) * this.zoom + this.screenH / 2,
    ];
  }

  panBy(dxScreen: number, dyScreen: number): void {
    this.centerX -= dxScreen / this.zoom;
    this.centerY -= dyScreen / this.zoom;
  }

  /** Multiply zoom by `factor`, keeping the image point under (sx, sy) fixed. */
  zoomAt(factor: number, sx: number, sy: number): void {
    const [ix, iy] = this.screenToImage(sx, sy);
    this.zoom = clampZoom(this.zoom * factor);
    this.centerX = ix - (sx - this.screenW / 2) / this.zoom;
    this.centerY = iy - (sy - this.screenH / 2) / this.zoom;
  }

  /** Visible region in the pixels of the active level, clipped to the plane. */
  visibleLevelRect(meta: DatasetMeta): LevelRect {
    const level = this.levelFor(meta);
    const scale = 1 << level;
    const [ix0, iy0] = this.screenToImage(0, 0);
    const [ix1, iy1] = this.screenToImage(this.screenW, this.screenH);
    const lw = Math.ceil(meta.width_px / scale);
    const lh = Math.ceil(meta.height_px / scale);
    const x0 = Math.max(0, Math.floor(ix0 / scale));
    const y0 = Math.max(0, Math.floor(iy0 / scale));
    const x1 = Math.min(lw, Math.ceil(ix1 / scale) + 1);
    const y1 = Math.min(lh, Math.ceil(iy1 / scale) + 1);
    return { level, x0, y0, x1: Math.max(x1, x0 + 1), y1: Math.max(y1, y0 + 1) };
  }

  visibleTiles(meta: DatasetMeta): TileCoord[] {
    const rect = this.visibleLevelRect(meta);
    const t = meta.tile_size;
    const tiles: TileCoord[] = [];
    for (let ty = Math.floor(rect.y0 / t); ty <= Math.floor((rect.y1 - 1) / t); ty++) {
      for (let tx = Math.floor(rect.x0 / t); tx <= Math.floor((rect.x1 - 1) / t); tx++) {
        tiles.push({ level: rect.level, tx, ty });
      }
    }
    return tiles;
  }
}

function clampZoom(z: number): number {
  return Math.min(Math.max(z, MIN_ZOOM), MAX_ZOOM);
}
