import { describe, expect, it } from 'vitest';

import { LensController, MAGNIFIER_ORDER, MODE_ORDER } from '../src/lens.js';
import type { ChannelSetJson } from '../src/types.js';

const presets: ChannelSetJson[] = [
  { label: 'a', settings: [{ channel: 'ch00', color: [255, 0, 0], range_lo: 0, range_hi: 100 }] },
  { label: 'b', settings: [{ channel: 'ch01', color: [0, 255, 0], range_lo: 0, range_hi: 100 }] },
];

describe('LensController', () => {
  it('follows move targets', () => {
    const lens = new LensController(presets);
    lens.moveTo(123, 456);
    expect(lens.cx).toBe(123);
    expect(lens.cy).toBe(456);
  });

  it('magnifier cycle order is stable and complete', () => {
    const lens = new LensController(presets);
    const seen = [lens.magnifier];
    for (let i = 0; i < 4; i++) seen.push(lens.cycleMagnifier());
    expect(seen).toEqual([...MAGNIFIER_ORDER, 'none']);
  });

  it('mode cycle covers all modes and wraps', () => {
    const lens = new LensController(presets);
    lens.setMode(MODE_ORDER[0]);
    const seen = [lens.mode];
    for (let i = 0; i < MODE_ORDER.length; i++) seen.push(lens.cycleMode());
    expect(seen.slice(0, MODE_ORDER.length)).toEqual(MODE_ORDER);
    expect(seen[MODE_ORDER.length]).toBe(MODE_ORDER[0]);
  });

  it('rectangle lenses drop distortion magnifiers', () => {
    const lens = new LensController(presets);
    lens.cycleMagnifier(); // normal
    lens.toggleShape();
    expect(lens.shape).toBe('rectangle');
    expect(lens.magnifier).toBe('none');
    expect(lens.cycleMagnifier()).toBe('none'); // stays none while rectangular
  });

  it('keyboard map: L toggles, brackets resize, M cycles, digits pick presets', () => {
    const lens = new LensController(presets);
    expect(lens.handleKey('l')).toBe(true);
    expect(lens.active).toBe(true);
    const r = lens.radius;
    expect(lens.handleKey(']')).toBe(true);
    expect(lens.radius).toBeGreaterThan(r);
    expect(lens.handleKey('[')).toBe(true);
    expect(lens.radius).toBeCloseTo(r, 9);
    expect(lens.handleKey('m')).toBe(true);
    expect(lens.magnifier).toBe('normal');
    expect(lens.handleKey('2')).toBe(true);
    expect(lens.channelSet.label).toBe('b');
    expect(lens.handleKey('x')).toBe(false);
  });

  it('serializes to the wire format and applies restores', () => {
    const lens = new LensController(presets);
    lens.moveTo(10, 20);
    lens.magnifier = 'plateau';
    lens.magFactor = 3;
    const json = lens.toJson();
    expect(json.geometry).toEqual({ shape: 'circle', cx: 10, cy: 20, radius_px: lens.radius });
    expect(json.magnifier).toBe('plateau');

    const other = new LensController(presets);
    other.applyJson(json);
    expect(other.cx).toBe(10);
    expect(other.magnifier).toBe('plateau');
    expect(other.magFactor).toBe(3);
    expect(other.active).toBe(true);
    expect(other.channelSet).toEqual(json.lens_channel_set);
  });

  it('resize never collapses below the minimum', () => {
    const lens = new LensController(presets);
    for (let i = 0; i < 100; i++) lens.resizeBy(-1);
    expect(lens.radius).toBeGreaterThanOrEqual(4);
  });
});
