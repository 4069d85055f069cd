// Thin typed client over fetch. All viewer data flows through here; nothing
// numeric is recomputed client-side.

import type {
  DatasetMeta,
  GeoJsonCollection,
  LensGeometryJson,
  LensStateJson,
  ChannelSetJson,
  RegionStatsJson,
  RestoreStateJson,
  SearchJob,
  SnapshotJson,
  ViewportPose,
} from './types.js';

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

function geometryParams(g: LensGeometryJson): Record<string, string> {
  const p: Record<string, string> = {
    shape: g.shape,
    cx: String(g.cx),
    cy: String(g.cy),
  };
  if (g.shape === 'circle') p.r = String(g.radius_px ?? 0);
  else {
    p.half_w = String(g.half_w ?? 0);
    p.half_h = String(g.half_h ?? 0);
  }
  return p;
}

export class ApiClient {
  constructor(private baseUrl: string) {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.baseUrl + path, init);
    if (!resp.ok) {
      let code = 'error';
      let message = `${resp.status} on ${path}`;
      try {
        const body = await resp.json();
        code = body.code ?? code;
        message = body.message ?? message;
      } catch {
        // non-JSON error body; keep defaults
      }
      throw new ApiError(resp.status, code, message);
    }
    return (await resp.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.json<T>(path, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    });
  }

  getMeta(): Promise<DatasetMeta> {
    return this.json('/api/meta');
  }

  tileUrl(channel: string, level: number, tx: number, ty: number): string {
    return `${this.baseUrl}/api/tile/${encodeURIComponent(channel)}/${level}/${tx}/${ty}`;
  }

  async renderPng(body: {
    viewport: { level: number; x0: number; y0: number; x1: number; y1: number };
    context: ChannelSetJson;
    lens?: LensStateJson | null;
  }): Promise<Blob> {
    const resp = await fetch(this.baseUrl + '/api/render', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    });
    if (!resp.ok) throw new ApiError(resp.status, 'render', `render failed: ${resp.status}`);
    return resp.blob();
  }

  lensStats(
    geometry: LensGeometryJson,
    channels: string[],
    order: 'locked' | 'by_count' = 'locked',
  ): Promise<RegionStatsJson> {
    const p = new URLSearchParams({
      ...geometryParams(geometry),
      channels: channels.join(','),
      order,
    });
    return this.json(`/api/lens/stats?${p}`);
  }

  brush(
    geometry: LensGeometryJson,
    channel: string,
    lo: number,
    hi: number,
  ): Promise<{ cell_ids: number[] }> {
    const p = new URLSearchParams({
      ...geometryParams(geometry),
      channel,
      lo: String(lo),
      hi: String(hi),
    });
    return this.json(`/api/lens/brush?${p}`);
  }

  searchViewport(body: {
    geometry: LensGeometryJson;
    channels: (string | ChannelSetJson['settings'][number])[];
    threshold: number;
    viewport: { level: number; x0: number; y0: number; x1: number; y1: number };
  }): Promise<GeoJsonCollection> {
    return this.post('/api/search', { ...body, scope: 'viewport' });
  }

  searchWholeImage(body: {
    geometry: LensGeometryJson;
    channels: (string | ChannelSetJson['settings'][number])[];
    threshold: number;
  }): Promise<{ job_id: string; state: string }> {
    return this.post('/api/search', { ...body, scope: 'whole' });
  }

  searchJob(jobId: string): Promise<SearchJob> {
    return this.json(`/api/search/${jobId}`);
  }

  listSnapshots(query = ''): Promise<{ snapshots: SnapshotJson[] }> {
    const q = query ? `?query=${encodeURIComponent(query)}` : '';
    return this.json(`/api/snapshots${q}`);
  }

  createSnapshot(body: {
    title: string;
    description: string;
    viewport: ViewportPose;
    lens: LensStateJson;
    context: ChannelSetJson;
  }): Promise<SnapshotJson> {
    return this.post('/api/snapshots', body);
  }

  getSnapshot(id: string): Promise<SnapshotJson> {
    return this.json(`/api/snapshots/${id}`);
  }

  updateSnapshot(id: string, patch: { title?: string; description?: string }): Promise<SnapshotJson> {
    return this.json(`/api/snapshots/${id}`, {
      method: 'PATCH',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(patch),
    });
  }

  deleteSnapshot(id: string): Promise<{ deleted: string }> {
    return this.json(`/api/snapshots/${id}`, { method: 'DELETE' });
  }

  restoreSnapshot(id: string): Promise<RestoreStateJson> {
    return this.json(`/api/snapshots/${id}/restore`);
  }

  extendSearch(
    id: string,
    threshold: number,
  ): Promise<{ contours: GeoJsonCollection; provisional: SnapshotJson[] }> {
    return this.post(`/api/snapshots/${id}/extend_search`, { threshold });
  }
}
