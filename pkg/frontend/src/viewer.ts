/** Canvas orchestration: fetch slice + mask, composite, handle clicks. */

import { ApiClient, ApiError } from './api.js';
import { canvasToVoxel, sliceDims, voxelToCanvas } from './coords.js';
import { compositeSlice } from './compositor.js';
import { decodeRleRows } from './rle.js';
import * as st from './state.js';
import type { Axis, ViewerState, Voxel } from './types.js';

export class SliceViewer {
  state: ViewerState;
  private zoom = 2;
  private busy: Promise<unknown> = Promise.resolve();
  private listeners: Array<(s: ViewerState) => void> = [];

  constructor(
    private api: ApiClient,
    private canvas: HTMLCanvasElement,
    state: ViewerState,
  ) {
    this.state = state;
    this.canvas.addEventListener('click', (ev) => this.onCanvasClick(ev));
  }

  onChange(fn: (s: ViewerState) => void) {
    this.listeners.push(fn);
  }

  private update(next: ViewerState) {
    this.state = next;
    for (const fn of this.listeners) fn(next);
  }

  /** Serialize mutations: the UI keeps one in-flight request per session. */
  private enqueue<T>(job: () => Promise<T>): Promise<T> {
    const next = this.busy.then(job, job);
    this.busy = next.catch(() => undefined);
    return next;
  }

  async refresh(): Promise<void> {
    const { axis, sliceIndex } = this.state;
    const [w, h] = sliceDims(this.state.dims, axis);
    const gray = await this.fetchGray(axis, sliceIndex, w, h);
    let mask: Uint8Array | null = null;
    let version = this.state.serverVersion;
    if (this.state.overlayVisible) {
      const slice = await this.api.maskSliceRle(this.state.sessionId, axis, sliceIndex);
      mask = decodeRleRows(slice.rle, w, h);
      version = slice.version;
    }
    // frame consistency: pixels always correspond to one server version
    const rgba = compositeSlice(gray, mask, this.state.overlayVisible ? this.state.overlayOpacity : 0);
    this.draw(rgba, w, h);
    this.drawMarkers();
    this.update(st.markRendered(st.adoptServerVersion(this.state, version), version));
  }

  private async fetchGray(axis: Axis, index: number, w: number, h: number): Promise<Uint8ClampedArray> {
    const url = this.api.sliceUrl(
      this.state.volumeId, axis, index, this.state.windowLo, this.state.windowHi,
    );
    const res = await fetch(url);
    if (!res.ok) throw new ApiError(res.status, `slice fetch failed: ${res.status}`);
    const bitmap = await createImageBitmap(await res.blob());
    const off = document.createElement('canvas');
    off.width = w;
    off.height = h;
    const ctx = off.getContext('2d')!;
    ctx.drawImage(bitmap, 0, 0);
    const data = ctx.getImageData(0, 0, w, h).data;
    const gray = new Uint8ClampedArray(w * h);
    for (let i = 0; i < gray.length; i++) gray[i] = data[i * 4];
    return gray;
  }

  private draw(rgba: Uint8ClampedArray, w: number, h: number) {
    this.canvas.width = w * this.zoom;
    this.canvas.height = h * this.zoom;
    const off = document.createElement('canvas');
    off.width = w;
    off.height = h;
    const image = new ImageData(w, h);
    image.data.set(rgba);
    off.getContext('2d')!.putImageData(image, 0, 0);
    const ctx = this.canvas.getContext('2d')!;
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(off, 0, 0, this.canvas.width, this.canvas.height);
  }

  private drawMarkers() {
    const ctx = this.canvas.getContext('2d')!;
    for (const marker of this.state.markers) {
      const pt = voxelToCanvas(
        marker.voxel, this.state.dims, this.state.axis, this.state.sliceIndex, this.zoom,
      );
      if (!pt) continue;
      ctx.beginPath();
      ctx.arc(pt[0], pt[1], Math.max(3, this.zoom), 0, 2 * Math.PI);
      ctx.fillStyle = marker.polarity === 'pos' ? 'rgba(230,40,40,0.9)' : 'rgba(40,90,230,0.9)';
      ctx.globalAlpha = marker.pending ? 0.5 : 1.0;
      ctx.fill();
      ctx.globalAlpha = 1.0;
    }
  }

  private onCanvasClick(ev: MouseEvent) {
    const rect = this.canvas.getBoundingClientRect();
    const voxel = canvasToVoxel(
      ev.clientX - rect.left,
      ev.clientY - rect.top,
      this.state.dims,
      this.state.axis,
      this.state.sliceIndex,
      this.zoom,
    );
    if (voxel) void this.submitClick(voxel);
  }

  async submitClick(voxel: Voxel): Promise<void> {
    const polarity = this.state.clickPolarity;
    this.update(st.addPendingMarker(this.state, voxel));
    this.drawMarkers(); // optimistic marker, reconciled on response
    await this.enqueue(async () => {
      try {
        const reply = await this.api.postClick(this.state.sessionId, voxel, polarity);
        this.update(st.confirmMarker(this.state, reply.version));
        await this.refresh();
      } catch (err) {
        const message = err instanceof ApiError ? err.message : String(err);
        this.update(st.rejectMarker(this.state, message));
        await this.refresh();
      }
    });
  }

  async undo(): Promise<void> {
    if (!st.canUndo(this.state)) return; // control disabled: no request
    await this.enqueue(async () => {
      try {
        const reply = await this.api.undo(this.state.sessionId);
        this.update(st.applyUndo(this.state, reply.version));
        await this.refresh();
      } catch (err) {
        this.update({ ...this.state, error: String(err) });
      }
    });
  }

  async runAuto(): Promise<void> {
    await this.enqueue(async () => {
      try {
        const reply = await this.api.runAuto(this.state.sessionId);
        this.update(st.adoptServerVersion({ ...this.state, markers: [] }, reply.version));
        await this.refresh();
      } catch (err) {
        const message = err instanceof ApiError ? err.message : String(err);
        this.update({ ...this.state, error: message });
      }
    });
  }

  async exportMask(): Promise<void> {
    const data = await this.api.maskNifti(this.state.sessionId);
    const blob = new Blob([data], { type: 'application/octet-stream' });
    const a = document.createElement('a');
    a.href = URL.createObjectURL(blob);
    a.download = `mask-v${this.state.serverVersion}.nii`;
    a.click();
    URL.revokeObjectURL(a.href);
  }

  async setAxis(axis: Axis): Promise<void> {
    this.update(st.switchAxis(this.state, axis));
    await this.refresh();
  }

  async setSlice(index: number): Promise<void> {
    this.update(st.setSliceIndex(this.state, index));
    await this.refresh();
  }

  async setWindow(lo: number, hi: number): Promise<void> {
    const next = st.setWindow(this.state, lo, hi);
    const changed = next.windowLo !== this.state.windowLo || next.windowHi !== this.state.windowHi;
    this.update(next);
    if (changed) await this.refresh();
  }

  async setOpacity(opacity: number): Promise<void> {
    this.update(st.setOpacity(this.state, opacity));
    await this.refresh();
  }

  setPolarity(polarity: 'pos' | 'neg'): void {
    this.update(st.setPolarity(this.state, polarity));
  }
}
