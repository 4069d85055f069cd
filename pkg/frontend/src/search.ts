// Search controller: synchronous viewport searches with latest-wins
// cancellation, threshold re-runs, and whole-image job polling.

import { ApiClient } from './api.js';
import type { GeoJsonCollection, LensGeometryJson } from './types.js';
import type { LevelRect } from './viewport.js';

export class SearchController {
  threshold = 0.8;
  contours: GeoJsonCollection | null = null;
  jobState: 'idle' | 'pending' | 'done' | 'failed' = 'idle';
  private requestToken = 0;

  constructor(private api: ApiClient) {}

  /** Run a viewport-scope search; a newer call supersedes in-flight results. */
  async runViewport(
    geometry: LensGeometryJson,
    channels: string[],
    viewport: LevelRect,
  ): Promise<GeoJsonCollection | null> {
    const token = ++this.requestToken;
    const result = await this.api.searchViewport({
      geometry,
      channels,
      threshold: this.threshold,
      viewport: {
        level: viewport.level,
        x0: viewport.x0,
        y0: viewport.y0,
        x1: viewport.x1,
        y1: viewport.y1,
      },
    });
    if (token !== this.requestToken) return null; // superseded
    this.contours = result;
    return result;
  }

  /** Threshold slider: remember the value and re-run with the last inputs. */
  async setThreshold(
    t: number,
    geometry: LensGeometryJson,
    channels: string[],
    viewport: LevelRect,
  ): Promise<GeoJsonCollection | null> {
    this.threshold = t;
    return this.runViewport(geometry, channels, viewport);
  }

  /** Whole-image search as a polled job. */
  async runWholeImage(
    geometry: LensGeometryJson,
    channels: string[],
    pollMs = 100,
    timeoutMs = 300_000,
  ): Promise<GeoJsonCollection> {
    this.jobState = 'pending';
    const { job_id } = await this.api.searchWholeImage({
      geometry,
      channels,
      threshold: this.threshold,
    });
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const job = await this.api.searchJob(job_id);
      if (job.state === 'done' && job.result) {
        this.jobState = 'done';
        this.contours = job.result;
        return job.result;
      }
      if (job.state === 'failed') {
        this.jobState = 'failed';
        throw new Error(job.error ?? 'whole-image search failed');
      }
      if (Date.now() > deadline) {
        this.jobState = 'failed';
        throw new Error('whole-image search timed out');
      }
      await new Promise((r) => setTimeout(r, pollMs));
    }
  }

  /**
   * Contour rings in screen coordinates for the overlay layer. Contours are
   * stored level-0 anchored, so they stay registered under pan and zoom.
   */
  screenRings(toScreen: (x: number, y: number) => [number, number]): [number, number][][] {
    if (!this.contours) return [];
    return this.contours.features
      .filter((f) => f.properties.area_px2 > 0)
      .map((f) => f.geometry.coordinates[0].map(([x, y]) => toScreen(x, y)));
  }
}
