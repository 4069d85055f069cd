// Viewer facade: composes camera, lens, search, and dotter over the API
// client. The DOM shell (main.ts) and the tests both drive this class, so
// every interaction the UI offers exists here as a plain method.

import { ApiClient } from './api.js';
import { Camera } from './viewport.js';
import { LensController } from './lens.js';
import { SearchController } from './search.js';
import { DotterPanel } from './dotter.js';
import type {
  ChannelRenderSetting,
  ChannelSetJson,
  DatasetMeta,
  GeoJsonCollection,
  RegionStatsJson,
  RestoreStateJson,
  SnapshotJson,
} from './types.js';

// distinguishable channel colors; display-side convention only
export const CHANNEL_PALETTE: [number, number, number][] = [
  [70, 130, 255],
  [255, 255, 255],
  [255, 80, 80],
  [80, 255, 120],
  [255, 200, 60],
  [200, 100, 255],
  [80, 230, 230],
  [255, 140, 0],
];

export function defaultSetting(name: string, index: number): ChannelRenderSetting {
  return {
    channel: name,
    color: CHANNEL_PALETTE[index % CHANNEL_PALETTE.length],
    range_lo: 0,
    range_hi: 65535,
  };
}

export interface ScaleTick {
  screenPx: number;
  micron: number;
}

export class Viewer {
  meta!: DatasetMeta;
  camera!: Camera;
  lens!: LensController;
  search: SearchController;
  dotter: DotterPanel;
  contextSettings: ChannelRenderSetting[] = [];
  stats: RegionStatsJson | null = null;

  constructor(
    public api: ApiClient,
    private screenW = 1280,
    private screenH = 800,
  ) {
    this.search = new SearchController(api);
    this.dotter = new DotterPanel(api);
  }

  async init(): Promise<void> {
    this.meta = await this.api.getMeta();
    this.camera = new Camera(this.meta, this.screenW, this.screenH);
    const names = this.meta.channels.map((c) => c.name);
    this.contextSettings = names.slice(0, 1).map((n) => defaultSetting(n, 0));
    // presets: slot 1 = first three channels combined, then singles
    const presets: ChannelSetJson[] = [
      {
        label: 'overview',
        settings: names.slice(0, 3).map((n, i) => defaultSetting(n, i)),
      },
      ...names.slice(0, 7).map((n, i) => ({
        label: n,
        settings: [defaultSetting(n, i)],
      })),
    ];
    this.lens = new LensController(presets);
    this.lens.moveTo(this.meta.width_px / 2, this.meta.height_px / 2);
  }

  contextSet(): ChannelSetJson {
    return { label: 'context', settings: this.contextSettings };
  }

  /** Channel panel toggle; returns whether the channel is now active. */
  toggleChannel(name: string): boolean {
    const i = this.contextSettings.findIndex((s) => s.channel === name);
    if (i >= 0) {
      if (this.contextSettings.length > 1) this.contextSettings.splice(i, 1);
      return i < 0;
    }
    const index = this.meta.channels.findIndex((c) => c.name === name);
    this.contextSettings.push(defaultSetting(name, Math.max(index, 0)));
    return true;
  }

  setChannelRange(name: string, lo: number, hi: number): void {
    const s = this.contextSettings.find((c) => c.channel === name);
    if (s && lo < hi) {
      s.range_lo = lo;
      s.range_hi = hi;
    }
  }

  /** Fetch the viewport raster from the server render path. */
  async renderViewport(): Promise<Blob> {
    const rect = this.camera.visibleLevelRect(this.meta);
    return this.api.renderPng({
      viewport: rect,
      context: this.contextSet(),
      lens: this.lens.active ? this.lens.toJson() : null,
    });
  }

  /** Region statistics for the current lens, straight from the API. */
  async refreshStats(order: 'locked' | 'by_count' = 'locked'): Promise<RegionStatsJson> {
    const channels = this.lens.channelSet.settings.map((s) => s.channel);
    this.stats = await this.api.lensStats(this.lens.geometry(), channels, order);
    return this.stats;
  }

  async runViewportSearch(): Promise<GeoJsonCollection | null> {
    const channels = this.lens.channelSet.settings.map((s) => s.channel);
    return this.search.runViewport(
      this.lens.geometry(),
      channels,
      this.camera.visibleLevelRect(this.meta),
    );
  }

  async setSearchThreshold(t: number): Promise<GeoJsonCollection | null> {
    const channels = this.lens.channelSet.settings.map((s) => s.channel);
    return this.search.setThreshold(
      t,
      this.lens.geometry(),
      channels,
      this.camera.visibleLevelRect(this.meta),
    );
  }

  async captureSnapshot(title: string, description: string): Promise<SnapshotJson> {
    return this.dotter.capture({
      title,
      description,
      viewport: {
        center: [this.camera.centerX, this.camera.centerY],
        zoom: this.camera.zoom,
      },
      lens: this.lens.toJson(),
      context: this.contextSet(),
    });
  }

  /** Thumbnail click: navigate only. */
  navigateToSnapshot(id: string): boolean {
    const pose = this.dotter.navigationTarget(id);
    if (!pose) return false;
    this.camera.setPose(pose.center[0], pose.center[1], pose.zoom);
    return true;
  }

  /** Marker click: full restore overwrites viewport, context, and lens. */
  async restoreSnapshot(id: string): Promise<RestoreStateJson> {
    const state = await this.dotter.restore(id);
    this.applyRestore(state);
    return state;
  }

  applyRestore(state: RestoreStateJson): void {
    this.camera.setPose(state.viewport.center[0], state.viewport.center[1], state.viewport.zoom);
    this.contextSettings = state.context_channel_set.settings.map((s) => ({ ...s }));
    this.lens.applyJson(state.lens);
  }

  /**
   * Micron ticks along the lens width. Steps come from the 1-2-5 decade;
   * the only inputs are the lens size, the camera zoom, and the dataset's
   * pixel_size_um served by /api/meta.
   */
  scaleTicks(maxTicks = 8): ScaleTick[] {
    const pixelSize = this.meta.pixel_size_um;
    const halfW = this.lens.shape === 'circle' ? this.lens.radius : this.lens.halfW;
    const spanUm = 2 * halfW * pixelSize;
    if (spanUm <= 0) return [{ screenPx: 0, micron: 0 }];
    let step = Number.NaN;
    outer: for (let k = -6; k < 12; k++) {
      for (const b of [1, 2, 5]) {
        const cand = b * Math.pow(10, k);
        if (spanUm / cand <= maxTicks) {
          step = cand;
          break outer;
        }
      }
    }
    const ticks: ScaleTick[] = [];
    for (let i = 0; i * step <= spanUm + 1e-9; i++) {
      const micron = i * step;
      ticks.push({ screenPx: (micron / pixelSize) * this.camera.zoom, micron });
    }
    return ticks;
  }
}
