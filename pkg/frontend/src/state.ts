/** Pure state transitions for the viewer; DOM wiring lives in viewer.ts. */

import { clampIndex } from './coords.js';
import type { Axis, Dims, Polarity, ViewerState, Voxel } from './types.js';

export function initialState(
  volumeId: string,
  sessionId: string,
  dims: Dims,
  windowLo: number,
  windowHi: number,
): ViewerState {
  return {
    volumeId,
    sessionId,
    dims,
    axis: 2,
    sliceIndex: Math.floor(dims[2] / 2),
    windowLo,
    windowHi,
    clickPolarity: 'pos',
    overlayVisible: true,
    overlayOpacity: 0.45,
    serverVersion: 0,
    renderedVersion: -1,
    markers: [],
    error: null,
  };
}

/** Switching axes clamps the slice index into the new axis extent. */
export function switchAxis(state: ViewerState, axis: Axis): ViewerState {
  return {
    ...state,
    axis,
    sliceIndex: clampIndex(state.sliceIndex, state.dims, axis),
  };
}

export function setSliceIndex(state: ViewerState, index: number): ViewerState {
  return { ...state, sliceIndex: clampIndex(index, state.dims, state.axis) };
}

/** Window changes require lo < hi; invalid requests leave state untouched. */
export function setWindow(state: ViewerState, lo: number, hi: number): ViewerState {
  if (!(lo < hi)) {
    return { ...state, error: `invalid window: lo (${lo}) must be below hi (${hi})` };
  }
  return { ...state, windowLo: lo, windowHi: hi, error: null };
}

export function setPolarity(state: ViewerState, polarity: Polarity): ViewerState {
  return { ...state, clickPolarity: polarity };
}

export function setOpacity(state: ViewerState, opacity: number): ViewerState {
  return { ...state, overlayOpacity: Math.min(1, Math.max(0, opacity)) };
}

/** The server confirmed a new mask version; local never runs ahead of it. */
export function adoptServerVersion(state: ViewerState, version: number): ViewerState {
  return { ...state, serverVersion: Math.max(state.serverVersion, version) };
}

/**
 * One mask fetch per version bump: returns true exactly once for a given
 * server version, assuming markRendered() is called when the fetch lands.
 */
export function needsMaskRefetch(state: ViewerState): boolean {
  return state.renderedVersion !== state.serverVersion;
}

export function markRendered(state: ViewerState, version: number): ViewerState {
  return { ...state, renderedVersion: version };
}

export function addPendingMarker(state: ViewerState, voxel: Voxel): ViewerState {
  return {
    ...state,
    markers: [...state.markers, { voxel, polarity: state.clickPolarity, pending: true }],
  };
}

/** Server accepted the click: confirm the newest pending marker. */
export function confirmMarker(state: ViewerState, version: number): ViewerState {
  const markers = state.markers.slice();
  for (let i = markers.length - 1; i >= 0; i--) {
    if (markers[i].pending) {
      markers[i] = { ...markers[i], pending: false };
      break;
    }
  }
  return adoptServerVersion({ ...state, markers, error: null }, version);
}

/** Server rejected the click: drop the marker and surface the message. */
export function rejectMarker(state: ViewerState, message: string): ViewerState {
  const markers = state.markers.slice();
  for (let i = markers.length - 1; i >= 0; i--) {
    if (markers[i].pending) {
      markers.splice(i, 1);
      break;
    }
  }
  return { ...state, markers, error: message };
}

/** Undo removes the newest confirmed marker along with its mask version. */
export function applyUndo(state: ViewerState, version: number): ViewerState {
  const markers = state.markers.slice();
  for (let i = markers.length - 1; i >= 0; i--) {
    if (!markers[i].pending) {
      markers.splice(i, 1);
      break;
    }
  }
  return adoptServerVersion({ ...state, markers }, version);
}

export function canUndo(state: ViewerState): boolean {
  return state.markers.some((m) => !m.pending);
}
