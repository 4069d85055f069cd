// Chart-space layout for the in-situ statistics: vertical histograms with
// whole-image reference bins, the radial means chart, and type-count bars.
// Every displayed number comes straight from a RegionStatsJson; layout here
// only maps values to pixels.

import type { ChannelHistogramJson, RadialMeanJson } from './types.js';

export interface HistogramBar {
  binIndex: number;
  x: number;
  width: number;
  regionHeight: number;
  globalHeight: number; // reference bins, rescaled for display
  count: number; // raw in-region count as reported by the API
  globalCount: number; // raw whole-image count as reported by the API
  edgeLo: number;
  edgeHi: number;
}

export interface HistogramLayout {
  channel: string;
  bars: HistogramBar[];
  regionMean: number | null;
  globalMean: number;
}

/**
 * Lay one channel histogram out into `width` x `height` pixels. Global
 * reference counts are rescaled to the region's total mass so the orange
 * background bins stay comparable as the lens moves.
 */
export function histogramLayout(
  hist: ChannelHistogramJson,
  width: number,
  height: number,
): HistogramLayout {
  const n = hist.counts.length;
  const sumRegion = hist.counts.reduce((a, b) => a + b, 0);
  const sumGlobal = hist.global_counts.reduce((a, b) => a + b, 0);
  const ratio = sumGlobal > 0 && sumRegion > 0 ? sumRegion / sumGlobal : 0;
  const displayGlobal = hist.global_counts.map((c) => c * ratio);
  const peak = Math.max(1e-12, ...hist.counts, ...displayGlobal);
  const barW = width / n;
  const bars: HistogramBar[] = hist.counts.map((count, i) => ({
    binIndex: i,
    x: i * barW,
    width: barW,
    regionHeight: (count / peak) * height,
    globalHeight: (displayGlobal[i] / peak) * height,
    count,
    globalCount: hist.global_counts[i],
    edgeLo: hist.bin_edges[i],
    edgeHi: hist.bin_edges[i + 1],
  }));
  return {
    channel: hist.channel,
    bars,
    regionMean: hist.region_mean,
    globalMean: hist.global_mean,
  };
}

/** Convert a pixel brush selection to the log2-domain value range it spans. */
export function brushToRange(
  hist: ChannelHistogramJson,
  pxLo: number,
  pxHi: number,
  width: number,
): [number, number] {
  const e0 = hist.bin_edges[0];
  const e1 = hist.bin_edges[hist.bin_edges.length - 1];
  const lo = e0 + (Math.min(pxLo, pxHi) / width) * (e1 - e0);
  const hi = e0 + (Math.max(pxLo, pxHi) / width) * (e1 - e0);
  return [Math.max(e0, lo), Math.min(e1, hi)];
}

export interface RadialPoint {
  channel: string;
  angle: number; // radians, 0 at 12 o'clock, clockwise
  regionXY: [number, number] | null;
  globalXY: [number, number];
}

/**
 * Radial chart: one spoke per channel; region means as a polygon, global
 * means as the reference polyline. Radii are normalized per spoke by the
 * larger of the two means so both stay inside the chart.
 */
export function radialLayout(means: RadialMeanJson[], radius: number): RadialPoint[] {
  const n = means.length;
  return means.map((m, i) => {
    const angle = (2 * Math.PI * i) / Math.max(n, 1);
    const denom = Math.max(m.global_mean, m.region_mean ?? 0, 1e-12);
    const g = (m.global_mean / denom) * radius;
    const pt = (r: number): [number, number] => [r * Math.sin(angle), -r * Math.cos(angle)];
    return {
      channel: m.channel,
      angle,
      regionXY: m.region_mean === null ? null : pt((m.region_mean / denom) * radius),
      globalXY: pt(g),
    };
  });
}

export interface TypeBar {
  type: string;
  count: number;
  widthFraction: number;
}

export function typeCountBars(typeCounts: [string, number][]): TypeBar[] {
  const peak = Math.max(1, ...typeCounts.map(([, c]) => c));
  return typeCounts.map(([type, count]) => ({
    type,
    count,
    widthFraction: count / peak,
  }));
}
