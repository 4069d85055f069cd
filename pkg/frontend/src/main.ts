// Browser shell: wires the viewer facade to a canvas, the channel panel,
// stat charts, the search slider, and the Dotter gallery. All heavy pixel
// work happens server-side; this layer draws bitmaps and overlays.

import { ApiClient } from './api.js';
import { Viewer } from './viewer.js';
import { histogramLayout, radialLayout, typeCountBars, brushToRange } from './charts.js';
import type { LensMode } from './types.js';

const MODE_LABELS: [LensMode, string][] = [
  ['magnify', 'Magnify'],
  ['single_channel', 'Single channel'],
  ['multi_channel', 'Multi channel'],
  ['split_screen', 'Split screen'],
  ['histogram', 'Histograms'],
  ['radial', 'Radial chart'],
  ['cell_type', 'Cell types'],
  ['search', 'Search'],
];

const STAT_MODES: LensMode[] = ['histogram', 'radial', 'cell_type'];

class Shell {
  api: ApiClient;
  viewer: Viewer;
  canvas: HTMLCanvasElement;
  ctx: CanvasRenderingContext2D;
  raster: ImageBitmap | null = null;
  rasterRect: { level: number; x0: number; y0: number; x1: number; y1: number } | null = null;
  renderTimer: number | null = null;
  renderSeq = 0;
  dragging = false;
  lastX = 0;
  lastY = 0;
  brushDown: number | null = null;
  highlighted: Set<number> = new Set();

  constructor() {
    this.api = new ApiClient('');
    this.canvas = document.getElementById('view') as HTMLCanvasElement;
    this.ctx = this.canvas.getContext('2d')!;
    this.viewer = new Viewer(this.api, this.canvas.width, this.canvas.height);
  }

  async start(): Promise<void> {
    await this.viewer.init();
    this.buildChannelPanel();
    this.buildModeButtons();
    this.wireCanvas();
    this.wireKeyboard();
    this.wireSearchPanel();
    await this.refreshDotter('');
    this.scheduleRender(0);
    const loop = () => {
      this.draw();
      requestAnimationFrame(loop);
    };
    requestAnimationFrame(loop);
  }

  // ------------------------------------------------------------ rendering

  scheduleRender(delayMs = 120): void {
    if (this.renderTimer !== null) window.clearTimeout(this.renderTimer);
    this.renderTimer = window.setTimeout(() => void this.fetchRaster(), delayMs);
  }

  async fetchRaster(): Promise<void> {
    const seq = ++this.renderSeq;
    const rect = this.viewer.camera.visibleLevelRect(this.viewer.meta);
    try {
      const blob = await this.viewer.renderViewport();
      if (seq !== this.renderSeq) return; // superseded while in flight
      this.raster = await createImageBitmap(blob);
      this.rasterRect = rect;
    } catch (e) {
      console.warn('render failed', e);
    }
  }

  draw(): void {
    const { ctx, canvas } = this;
    ctx.fillStyle = '#10131a';
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    const cam = this.viewer.camera;
    if (this.raster && this.rasterRect) {
      const scale = 1 << this.rasterRect.level;
      const [sx, sy] = cam.imageToScreen(this.rasterRect.x0 * scale, this.rasterRect.y0 * scale);
      const w = (this.rasterRect.x1 - this.rasterRect.x0) * scale * cam.zoom;
      const h = (this.rasterRect.y1 - this.rasterRect.y0) * scale * cam.zoom;
      ctx.imageSmoothingEnabled = cam.zoom < 1;
      ctx.drawImage(this.raster, sx, sy, w, h);
    }
    this.drawSearchOverlay();
    this.drawLensOutline();
  }

  drawSearchOverlay(): void {
    const rings = this.viewer.search.screenRings((x, y) => this.viewer.camera.imageToScreen(x, y));
    if (!rings.length) return;
    const ctx = this.ctx;
    ctx.strokeStyle = '#ffd24a';
    ctx.lineWidth = 1.5;
    for (const ring of rings) {
      ctx.beginPath();
      ring.forEach(([x, y], i) => (i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y)));
      ctx.stroke();
    }
  }

  drawLensOutline(): void {
    const lens = this.viewer.lens;
    if (!lens.active) return;
    const cam = this.viewer.camera;
    const ctx = this.ctx;
    const [cx, cy] = cam.imageToScreen(lens.cx, lens.cy);
    ctx.strokeStyle = '#9ecbff';
    ctx.lineWidth = 2;
    ctx.beginPath();
    if (lens.shape === 'circle') {
      ctx.arc(cx, cy, lens.radius * cam.zoom, 0, 2 * Math.PI);
    } else {
      ctx.rect(
        cx - lens.halfW * cam.zoom,
        cy - lens.halfH * cam.zoom,
        2 * lens.halfW * cam.zoom,
        2 * lens.halfH * cam.zoom,
      );
    }
    ctx.stroke();
    this.drawScaleTicks(cx, cy);
  }

  drawScaleTicks(cx: number, cy: number): void {
    const lens = this.viewer.lens;
    const cam = this.viewer.camera;
    const halfScreen = (lens.shape === 'circle' ? lens.radius : lens.halfW) * cam.zoom;
    const y = cy + (lens.shape === 'circle' ? lens.radius : lens.halfH) * cam.zoom + 14;
    const ctx = this.ctx;
    ctx.strokeStyle = '#d7e3f4';
    ctx.fillStyle = '#d7e3f4';
    ctx.font = '10px sans-serif';
    ctx.beginPath();
    ctx.moveTo(cx - halfScreen, y);
    ctx.lineTo(cx + halfScreen, y);
    ctx.stroke();
    for (const tick of this.viewer.scaleTicks()) {
      const x = cx - halfScreen + tick.screenPx;
      ctx.beginPath();
      ctx.moveTo(x, y - 3);
      ctx.lineTo(x, y + 3);
      ctx.stroke();
      ctx.fillText(`${tick.micron}`, x - 6, y + 14);
    }
    ctx.fillText('µm', cx + halfScreen + 6, y + 4);
  }

  // ------------------------------------------------------------ panels

  buildChannelPanel(): void {
    const panel = document.getElementById('channels')!;
    panel.innerHTML = '';
    for (const ch of this.viewer.meta.channels) {
      const row = document.createElement('div');
      row.className = 'channel-row';
      const box = document.createElement('input');
      box.type = 'checkbox';
      box.checked = this.viewer.contextSettings.some((s) => s.channel === ch.name);
      box.addEventListener('change', () => {
        this.viewer.toggleChannel(ch.name);
        this.scheduleRender(0);
      });
      const label = document.createElement('span');
      label.textContent = ch.modality_group ? `${ch.name} (${ch.modality_group})` : ch.name;
      const lo = document.createElement('input');
      lo.type = 'range';
      lo.min = '0';
      lo.max = '65535';
      lo.value = '0';
      const hi = document.createElement('input');
      hi.type = 'range';
      hi.min = '1';
      hi.max = '65535';
      hi.value = '65535';
      const apply = () => {
        this.viewer.setChannelRange(ch.name, Number(lo.value), Number(hi.value));
        this.scheduleRender();
      };
      lo.addEventListener('input', apply);
      hi.addEventListener('input', apply);
      row.append(box, label, lo, hi);
      panel.append(row);
    }
  }

  buildModeButtons(): void {
    const bar = document.getElementById('modes')!;
    bar.innerHTML = '';
    for (const [mode, label] of MODE_LABELS) {
      const btn = document.createElement('button');
      btn.textContent = label;
      btn.addEventListener('click', () => void this.setMode(mode));
      bar.append(btn);
    }
    const snapBtn = document.getElementById('snapshot-btn')!;
    snapBtn.addEventListener('click', () => void this.captureSnapshot());
  }

  async setMode(mode: LensMode): Promise<void> {
    this.viewer.lens.setMode(mode);
    this.viewer.lens.active = true;
    if (STAT_MODES.includes(mode)) {
      await this.viewer.refreshStats();
      this.renderStatPanels();
    }
    if (mode === 'search') await this.runSearch();
    this.scheduleRender(0);
  }

  renderStatPanels(): void {
    const stats = this.viewer.stats;
    const panel = document.getElementById('stats')!;
    panel.innerHTML = '';
    if (!stats) return;
    const head = document.createElement('div');
    head.textContent = `${stats.n_cells} cells · ${stats.area_um2.toFixed(1)} µm²`;
    panel.append(head);
    if (this.viewer.lens.mode === 'histogram') {
      for (const hist of stats.histograms) this.renderHistogram(panel, hist);
    } else if (this.viewer.lens.mode === 'radial') {
      this.renderRadial(panel, stats);
    } else if (this.viewer.lens.mode === 'cell_type') {
      for (const bar of typeCountBars(stats.type_counts)) {
        const row = document.createElement('div');
        row.className = 'type-row';
        const swatch = document.createElement('div');
        swatch.className = 'type-bar';
        swatch.style.width = `${Math.round(bar.widthFraction * 160)}px`;
        const label = document.createElement('span');
        label.textContent = `${bar.type}: ${bar.count}`;
        row.append(swatch, label);
        panel.append(row);
      }
    }
  }

  renderHistogram(panel: HTMLElement, hist: Parameters<typeof histogramLayout>[0]): void {
    const width = 240;
    const height = 72;
    const layout = histogramLayout(hist, width, height);
    const cv = document.createElement('canvas');
    cv.width = width;
    cv.height = height + 16;
    const c = cv.getContext('2d')!;
    c.fillStyle = '#20242e';
    c.fillRect(0, 0, width, height);
    for (const bar of layout.bars) {
      // whole-image reference bins behind the region bars
      c.fillStyle = 'rgba(255, 165, 0, 0.45)';
      c.fillRect(bar.x, height - bar.globalHeight, bar.width, bar.globalHeight);
      c.fillStyle = '#9ecbff';
      c.fillRect(bar.x + 1, height - bar.regionHeight, bar.width - 2, bar.regionHeight);
    }
    c.fillStyle = '#d7e3f4';
    c.font = '10px sans-serif';
    c.fillText(hist.channel, 4, height + 12);
    cv.addEventListener('mousedown', (e) => (this.brushDown = e.offsetX));
    cv.addEventListener('mouseup', (e) => void this.finishBrush(hist, e.offsetX, width));
    panel.append(cv);
  }

  async finishBrush(
    hist: Parameters<typeof histogramLayout>[0],
    upX: number,
    width: number,
  ): Promise<void> {
    if (this.brushDown === null) return;
    const [lo, hi] = brushToRange(hist, this.brushDown, upX, width);
    this.brushDown = null;
    const resp = await this.api.brush(this.viewer.lens.geometry(), hist.channel, lo, hi);
    this.highlighted = new Set(resp.cell_ids);
    this.scheduleRender(0);
  }

  renderRadial(panel: HTMLElement, stats: NonNullable<Viewer['stats']>): void {
    const r = 80;
    const cv = document.createElement('canvas');
    cv.width = cv.height = 2 * r + 40;
    const c = cv.getContext('2d')!;
    const cx = r + 20;
    const cy = r + 20;
    const pts = radialLayout(stats.radial_means, r);
    c.strokeStyle = 'rgba(255,165,0,0.9)';
    c.beginPath();
    pts.forEach((p, i) => {
      const [x, y] = p.globalXY;
      i === 0 ? c.moveTo(cx + x, cy + y) : c.lineTo(cx + x, cy + y);
    });
    c.closePath();
    c.stroke();
    c.strokeStyle = '#9ecbff';
    c.fillStyle = 'rgba(158,203,255,0.25)';
    c.beginPath();
    let started = false;
    for (const p of pts) {
      if (!p.regionXY) continue;
      const [x, y] = p.regionXY;
      started ? c.lineTo(cx + x, cy + y) : c.moveTo(cx + x, cy + y);
      started = true;
    }
    if (started) {
      c.closePath();
      c.fill();
      c.stroke();
    }
    panel.append(cv);
  }

  // ------------------------------------------------------------ search

  wireSearchPanel(): void {
    const slider = document.getElementById('threshold') as HTMLInputElement;
    const label = document.getElementById('threshold-label')!;
    slider.addEventListener('input', () => {
      label.textContent = slider.value;
    });
    slider.addEventListener('change', () => void this.applyThreshold(Number(slider.value)));
    document
      .getElementById('search-viewport')!
      .addEventListener('click', () => void this.runSearch());
    document
      .getElementById('search-whole')!
      .addEventListener('click', () => void this.runWholeSearch());
  }

  async runSearch(): Promise<void> {
    await this.viewer.runViewportSearch();
  }

  async applyThreshold(t: number): Promise<void> {
    await this.viewer.setSearchThreshold(t);
  }

  async runWholeSearch(): Promise<void> {
    const spinner = document.getElementById('job-spinner')!;
    spinner.classList.remove('hidden');
    try {
      const channels = this.viewer.lens.channelSet.settings.map((s) => s.channel);
      await this.viewer.search.runWholeImage(this.viewer.lens.geometry(), channels, 500);
    } finally {
      spinner.classList.add('hidden');
    }
  }

  // ------------------------------------------------------------ dotter

  async captureSnapshot(): Promise<void> {
    const title = (document.getElementById('snap-title') as HTMLInputElement).value;
    const desc = (document.getElementById('snap-desc') as HTMLInputElement).value;
    await this.viewer.captureSnapshot(title, desc);
    await this.refreshDotter((document.getElementById('snap-filter') as HTMLInputElement).value);
  }

  async refreshDotter(query: string): Promise<void> {
    const items = await this.viewer.dotter.load(query);
    const gallery = document.getElementById('gallery')!;
    gallery.innerHTML = '';
    for (const snap of items) {
      const card = document.createElement('div');
      card.className = 'snap-card';
      const img = document.createElement('img');
      img.src = this.viewer.dotter.thumbnailDataUrl(snap);
      img.title = 'click: navigate to stored view';
      img.addEventListener('click', () => {
        this.viewer.navigateToSnapshot(snap.id);
        this.scheduleRender(0);
      });
      const marker = document.createElement('button');
      marker.textContent = 'restore';
      marker.title = 'fully restore lens and channel settings';
      marker.addEventListener('click', () => {
        void this.viewer.restoreSnapshot(snap.id).then(() => {
          this.buildChannelPanel();
          this.scheduleRender(0);
        });
      });
      const extend = document.createElement('button');
      extend.textContent = 'find similar';
      extend.addEventListener('click', () => {
        void this.viewer.dotter.extendSearch(snap.id, this.viewer.search.threshold).then((r) => {
          this.viewer.search.contours = r.contours;
        });
      });
      const del = document.createElement('button');
      del.textContent = 'delete';
      del.addEventListener('click', () => {
        void this.viewer.dotter.remove(snap.id).then(() => this.refreshDotter(query));
      });
      const title = document.createElement('input');
      title.value = snap.title;
      title.addEventListener('change', () => {
        void this.viewer.dotter.editAnnotation(snap.id, title.value, undefined);
      });
      card.append(img, title, marker, extend, del);
      gallery.append(card);
    }
  }

  // ------------------------------------------------------------ input

  wireCanvas(): void {
    const cv = this.canvas;
    cv.addEventListener('mousedown', (e) => {
      this.dragging = true;
      this.lastX = e.offsetX;
      this.lastY = e.offsetY;
    });
    window.addEventListener('mouseup', () => (this.dragging = false));
    cv.addEventListener('mousemove', (e) => {
      if (this.dragging) {
        this.viewer.camera.panBy(e.offsetX - this.lastX, e.offsetY - this.lastY);
        this.lastX = e.offsetX;
        this.lastY = e.offsetY;
        this.scheduleRender();
      } else if (this.viewer.lens.active) {
        const [ix, iy] = this.viewer.camera.screenToImage(e.offsetX, e.offsetY);
        this.viewer.lens.moveTo(ix, iy);
        this.scheduleRender();
      }
    });
    cv.addEventListener('wheel', (e) => {
      e.preventDefault();
      if (e.shiftKey && this.viewer.lens.active) {
        this.viewer.lens.resizeBy(e.deltaY < 0 ? 1 : -1);
      } else {
        this.viewer.camera.zoomAt(e.deltaY < 0 ? 1.2 : 1 / 1.2, e.offsetX, e.offsetY);
      }
      this.scheduleRender();
    });
  }

  wireKeyboard(): void {
    document.addEventListener('keydown', (e) => {
      if ((e.target as HTMLElement | null)?.tagName === 'INPUT') return;
      if (this.viewer.lens.handleKey(e.key)) {
        this.scheduleRender();
        return;
      }
      if (e.key === 'c') this.viewer.lens.toggleShape();
    });
    const filter = document.getElementById('snap-filter') as HTMLInputElement;
    filter.addEventListener('input', () => void this.refreshDotter(filter.value));
  }
}

window.addEventListener('DOMContentLoaded', () => {
  const shell = new Shell();
  void shell.start();
});
