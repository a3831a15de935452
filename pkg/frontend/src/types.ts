/** Shared types for the slice viewer. */

export type Axis = 0 | 1 | 2;
export type Dims = [number, number, number];
export type Voxel = [number, number, number];
export type Polarity = 'pos' | 'neg';

export interface ClickMarker {
  voxel: Voxel;
  polarity: Polarity;
  /** true until the server confirms the click */
  pending: boolean;
}

export interface ViewerState {
  volumeId: string;
  sessionId: string;
  dims: Dims;
  axis: Axis;
  sliceIndex: number;
  /** intensity window (lo, hi); lo < hi always */
  windowLo: number;
  windowHi: number;
  clickPolarity: Polarity;
  overlayVisible: boolean;
  overlayOpacity: number;
  /** last mask version confirmed by the server */
  serverVersion: number;
  /** mask version the current overlay pixels were rendered from */
  renderedVersion: number;
  markers: ClickMarker[];
  error: string | null;
}

export interface MaskSliceRle {
  version: number;
  dims: [number, number];
  rle: [number, number][][];
}

export interface ClickResponse {
  version: number;
  changed_bbox: number[] | null;
}

export interface SessionInfo {
  session_id: string;
  volume_id: string;
  version: number;
  clicks: number;
  dims: Dims;
  class_index: number | null;
  dice: number | null;
}

export interface VolumeInfo {
  volume_id: string;
  dims: Dims;
  spacing: [number, number, number];
  kind: 'image' | 'labels';
}
