/** Bootstrap: upload a scan, open a session, wire the viewer controls. */

import { ApiClient } from './api.js';
import { initialState } from './state.js';
import { SliceViewer } from './viewer.js';
import type { Axis } from './types.js';

const $ = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;

async function start() {
  const api = new ApiClient('');
  let viewer: SliceViewer | null = null;

  const status = $('status');
  const say = (msg: string) => { status.textContent = msg; };

  $('open-btn').addEventListener('click', async () => {
    try {
      const volFile = ($('volume-file') as HTMLInputElement).files?.[0];
      if (!volFile) { say('choose a volume file first'); return; }
      say('uploading volume...');
      const vol = await api.uploadVolume(await volFile.arrayBuffer());

      let gtId: string | undefined;
      const gtFile = ($('gt-file') as HTMLInputElement).files?.[0];
      if (gtFile) {
        say('uploading labels...');
        gtId = (await api.uploadVolume(await gtFile.arrayBuffer())).volume_id;
      }

      const classRaw = ($('class-index') as HTMLInputElement).value.trim();
      const predictor = ($('predictor') as HTMLSelectElement).value;
      const session = await api.createSession({
        volume_id: vol.volume_id,
        class_index: classRaw ? Number(classRaw) : 'zero_shot',
        predictor,
        gt_volume_id: gtId,
      });

      const state = initialState(vol.volume_id, session.session_id, vol.dims, 0, 255);
      viewer = new SliceViewer(api, $('slice-canvas') as HTMLCanvasElement, state);
      viewer.onChange((s) => {
        $('version').textContent = `v${s.serverVersion}`;
        ($('slice-slider') as HTMLInputElement).max = String(s.dims[s.axis] - 1);
        ($('slice-slider') as HTMLInputElement).value = String(s.sliceIndex);
        $('slice-label').textContent = `${s.sliceIndex} / ${s.dims[s.axis] - 1}`;
        say(s.error ?? 'ready');
      });
      await viewer.refresh();
      say('session open: click to edit');
    } catch (err) {
      say(`failed: ${err}`);
    }
  });

  for (const axis of [0, 1, 2] as Axis[]) {
    $(`axis-${axis}`).addEventListener('click', () => viewer?.setAxis(axis));
  }
  $('slice-slider').addEventListener('input', (ev) => {
    viewer?.setSlice(Number((ev.target as HTMLInputElement).value));
  });
  $('polarity-pos').addEventListener('click', () => viewer?.setPolarity('pos'));
  $('polarity-neg').addEventListener('click', () => viewer?.setPolarity('neg'));
  $('opacity').addEventListener('input', (ev) => {
    viewer?.setOpacity(Number((ev.target as HTMLInputElement).value) / 100);
  });
  $('window-apply').addEventListener('click', () => {
    viewer?.setWindow(
      Number(($('window-lo') as HTMLInputElement).value),
      Number(($('window-hi') as HTMLInputElement).value),
    );
  });
  $('undo-btn').addEventListener('click', () => viewer?.undo());
  $('auto-btn').addEventListener('click', () => viewer?.runAuto());
  $('export-btn').addEventListener('click', () => viewer?.exportMask());
}

document.addEventListener('DOMContentLoaded', () => { void start(); });
