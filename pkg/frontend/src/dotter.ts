// Dotter panel state: the snapshot gallery with substring filtering,
// click-to-navigate, full restore, annotation editing, and extend-search.

import { ApiClient } from './api.js';
import type { GeoJsonCollection, RestoreStateJson, SnapshotJson, ViewportPose } from './types.js';

export class DotterPanel {
  items: SnapshotJson[] = [];
  query = '';

  constructor(private api: ApiClient) {}

  /** Refresh the gallery; filtering happens server-side via ?query=. */
  async load(query = ''): Promise<SnapshotJson[]> {
    this.query = query;
    const { snapshots } = await this.api.listSnapshots(query);
    this.items = snapshots;
    return snapshots;
  }

  async capture(body: Parameters<ApiClient['createSnapshot']>[0]): Promise<SnapshotJson> {
    const snap = await this.api.createSnapshot(body);
    await this.load(this.query);
    return snap;
  }

  /** Thumbnail click: where the viewer should navigate (no state overwrite). */
  navigationTarget(id: string): ViewportPose | null {
    const snap = this.items.find((s) => s.id === id);
    return snap ? snap.viewport : null;
  }

  /** Marker click: the full restore delta from the server. */
  restore(id: string): Promise<RestoreStateJson> {
    return this.api.restoreSnapshot(id);
  }

  async editAnnotation(id: string, title?: string, description?: string): Promise<SnapshotJson> {
    const updated = await this.api.updateSnapshot(id, { title, description });
    await this.load(this.query);
    return updated;
  }

  async remove(id: string): Promise<void> {
    await this.api.deleteSnapshot(id);
    await this.load(this.query);
  }

  async extendSearch(
    id: string,
    threshold: number,
  ): Promise<{ contours: GeoJsonCollection; provisional: SnapshotJson[] }> {
    return this.api.extendSearch(id, threshold);
  }

  thumbnailDataUrl(snap: SnapshotJson): string {
    return `data:image/png;base64,${snap.thumbnail_png_base64}`;
  }
}
