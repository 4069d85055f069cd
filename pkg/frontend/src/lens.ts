// Lens state machine: placement, sizing, mode/magnifier cycling, channel-set
// presets, and the keyboard map (L toggle, [/] resize, M magnifier, 1-8
// presets).

import type {
  ChannelSetJson,
  LensGeometryJson,
  LensMode,
  LensStateJson,
  Magnifier,
} from './types.js';

export const MAGNIFIER_ORDER: Magnifier[] = ['none', 'normal', 'fisheye', 'plateau'];

export const MODE_ORDER: LensMode[] = [
  'magnify',
  'single_channel',
  'multi_channel',
  'split_screen',
  'histogram',
  'radial',
  'cell_type',
  'search',
];

const RESIZE_STEP = 1.15;
const MIN_RADIUS = 4;

export class LensController {
  active = false;
  shape: 'circle' | 'rectangle' = 'circle';
  cx = 0;
  cy = 0;
  radius = 100;
  halfW = 100;
  halfH = 80;
  mode: LensMode = 'multi_channel';
  magnifier: Magnifier = 'none';
  magFactor = 2.0;
  plateauFraction = 0.75;
  blendAlpha = 1.0;
  presets: ChannelSetJson[] = [];
  presetIndex = 0;

  constructor(presets: ChannelSetJson[]) {
    if (presets.length === 0) throw new Error('lens needs at least one channel-set preset');
    this.presets = presets;
  }

  get channelSet(): ChannelSetJson {
    return this.presets[this.presetIndex];
  }

  moveTo(imageX: number, imageY: number): void {
    this.cx = imageX;
    this.cy = imageY;
  }

  resizeBy(steps: number): void {
    const f = Math.pow(RESIZE_STEP, steps);
    this.radius = Math.max(MIN_RADIUS, this.radius * f);
    this.halfW = Math.max(MIN_RADIUS, this.halfW * f);
    this.halfH = Math.max(MIN_RADIUS, this.halfH * f);
  }

  cycleMagnifier(): Magnifier {
    if (this.shape === 'rectangle') return this.magnifier; // distortion is circle-only
    const i = MAGNIFIER_ORDER.indexOf(this.magnifier);
    this.magnifier = MAGNIFIER_ORDER[(i + 1) % MAGNIFIER_ORDER.length];
    return this.magnifier;
  }

  cycleMode(): LensMode {
    const i = MODE_ORDER.indexOf(this.mode);
    this.mode = MODE_ORDER[(i + 1) % MODE_ORDER.length];
    return this.mode;
  }

  setMode(mode: LensMode): void {
    this.mode = mode;
  }

  toggleShape(): void {
    this.shape = this.shape === 'circle' ? 'rectangle' : 'circle';
    if (this.shape === 'rectangle') this.magnifier = 'none';
  }

  setPreset(index: number): void {
    if (index >= 0 && index < this.presets.length) this.presetIndex = index;
  }

  /** Keyboard map; returns true when the key was consumed. */
  handleKey(key: string): boolean {
    switch (key) {
      case 'l':
      case 'L':
        this.active = !this.active;
        return true;
      case '[':
        this.resizeBy(-1);
        return true;
      case ']':
        this.resizeBy(1);
        return true;
      case 'm':
      case 'M':
        this.cycleMagnifier();
        return true;
      default: {
        const n = Number(key);
        if (Number.isInteger(n) && n >= 1 && n <= 8) {
          this.setPreset(n - 1);
          return true;
        }
        return false;
      }
    }
  }

  geometry(): LensGeometryJson {
    if (this.shape === 'circle') {
      return { shape: 'circle', cx: this.cx, cy: this.cy, radius_px: this.radius };
    }
    return { shape: 'rectangle', cx: this.cx, cy: this.cy, half_w: this.halfW, half_h: this.halfH };
  }

  toJson(): LensStateJson {
    return {
      geometry: this.geometry(),
      lens_channel_set: this.channelSet,
      mode: this.mode,
      magnifier: this.magnifier,
      mag_factor: this.magFactor,
      plateau_fraction: this.plateauFraction,
      blend_alpha: this.blendAlpha,
    };
  }

  /** Overwrite everything from a restored lens state. */
  applyJson(lens: LensStateJson): void {
    const g = lens.geometry;
    this.shape = g.shape;
    this.cx = g.cx;
    this.cy = g.cy;
    if (g.shape === 'circle') this.radius = g.radius_px ?? this.radius;
    else {
      this.halfW = g.half_w ?? this.halfW;
      this.halfH = g.half_h ?? this.halfH;
    }
    this.mode = lens.mode;
    this.magnifier = lens.magnifier;
    this.magFactor = lens.mag_factor;
    this.plateauFraction = lens.plateau_fraction;
    this.blendAlpha = lens.blend_alpha;
    // the restored channel set becomes a preset so later toggling keeps working
    this.presets = [lens.lens_channel_set, ...this.presets.slice(0, 7)];
    this.presetIndex = 0;
    this.active = true;
  }
}
