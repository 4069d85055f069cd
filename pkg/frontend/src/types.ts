// Wire formats of the tissuelens HTTP API. These mirror the server's JSON
// exactly; the viewer never derives its own numbers from pixel data.

export interface ChannelMeta {
  name: string;
  modality_group: string | null;
}

export interface DatasetMeta {
  width_px: number;
  height_px: number;
  pixel_size_um: number;
  tile_size: number;
  levels: number;
  channels: ChannelMeta[];
  has_mask: boolean;
}

export interface ChannelRenderSetting {
  channel: string;
  color: [number, number, number];
  range_lo: number;
  range_hi: number;
}

export interface ChannelSetJson {
  label: string;
  settings: ChannelRenderSetting[];
}

export type LensShape = 'circle' | 'rectangle';

export interface LensGeometryJson {
  shape: LensShape;
  cx: number;
  cy: number;
  radius_px?: number;
  half_w?: number;
  half_h?: number;
}

export type Magnifier = 'none' | 'normal' | 'fisheye' | 'plateau';

export type LensMode =
  | 'magnify'
  | 'single_channel'
  | 'multi_channel'
  | 'split_screen'
  | 'histogram'
  | 'radial'
  | 'cell_type'
  | 'search';

export interface LensStateJson {
  geometry: LensGeometryJson;
  lens_channel_set: ChannelSetJson;
  mode: LensMode;
  magnifier: Magnifier;
  mag_factor: number;
  plateau_fraction: number;
  blend_alpha: number;
}

export interface ChannelHistogramJson {
  channel: string;
  bin_edges: number[];
  counts: number[];
  global_counts: number[];
  region_mean: number | null;
  global_mean: number;
}

export interface RadialMeanJson {
  channel: string;
  region_mean: number | null;
  global_mean: number;
}

export interface RegionStatsJson {
  cell_ids: number[];
  n_cells: number;
  empty: boolean;
  area_um2: number;
  histograms: ChannelHistogramJson[];
  radial_means: RadialMeanJson[];
  type_counts: [string, number][];
}

export interface GeoJsonFeature {
  type: 'Feature';
  geometry: { type: 'Polygon'; coordinates: number[][][] };
  properties: { similarity_threshold: number; area_px2: number };
}

export interface GeoJsonCollection {
  type: 'FeatureCollection';
  features: GeoJsonFeature[];
}

export interface SearchJob {
  job_id: string;
  state: 'pending' | 'done' | 'failed';
  result?: GeoJsonCollection;
  error?: string;
}

export interface ViewportPose {
  center: [number, number];
  zoom: number;
}

export interface SnapshotJson {
  id: string;
  title: string;
  description: string;
  created_at: string;
  geometry: LensGeometryJson;
  viewport: ViewportPose;
  lens_channel_set: ChannelSetJson;
  context_channel_set: ChannelSetJson;
  lens_mode: LensMode;
  magnifier: Magnifier;
  mag_factor: number;
  plateau_fraction: number;
  blend_alpha: number;
  cell_ids: number[];
  stats: RegionStatsJson;
  thumbnail_png_base64: string;
}

export interface RestoreStateJson {
  viewport: ViewportPose;
  context_channel_set: ChannelSetJson;
  lens: LensStateJson;
}

export interface ApiErrorBody {
  code: 'bad_request' | 'not_found' | 'integrity' | 'capability';
  message: string;
  detail: string | null;
}
