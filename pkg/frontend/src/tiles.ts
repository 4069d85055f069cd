// Keyed LRU for decoded tile bitmaps. Fetch/decode lives in the DOM shell;
// this cache only tracks what to keep and what to drop.

export class TileCache<T> {
  private map = new Map<string, T>();

  constructor(private capacity = 256) {}

  static key(channel: string, level: number, tx: number, ty: number): string {
    return `${channel}/${level}/${tx}_${ty}`;
  }

  get(key: string): T | undefined {
    const v = this.map.get(key);
    if (v !== undefined) {
      // refresh recency
      this.map.delete(key);
      this.map.set(key, v);
    }
    return v;
  }

  set(key: string, value: T): void {
    if (this.map.has(key)) this.map.delete(key);
    this.map.set(key, value);
    while (this.map.size > this.capacity) {
      const oldest = this.map.keys().next().value as string;
      this.map.delete(oldest);
    }
  }

  has(key: string): boolean {
    return this.map.has(key);
  }

  get size(): number {
    return this.map.size;
  }
}
