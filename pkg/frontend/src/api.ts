/** Thin typed client for the segmentation service HTTP API. */

import type {
  Axis,
  ClickResponse,
  MaskSliceRle,
  Polarity,
  SessionInfo,
  VolumeInfo,
  Voxel,
} from './types.js';

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function parseError(res: Response): Promise<ApiError> {
  let message = `${res.status} ${res.statusText}`;
  try {
    const body = await res.json();
    if (body.detail) {
      message = typeof body.detail === 'string' ? body.detail : JSON.stringify(body.detail);
    }
  } catch {
    /* non-JSON error body; keep the status text */
  }
  return new ApiError(res.status, message);
}

export class ApiClient {
  constructor(private baseUrl: string = '') {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await fetch(this.baseUrl + path, init);
    if (!res.ok) throw await parseError(res);
    return (await res.json()) as T;
  }

  uploadVolume(data: ArrayBuffer | Uint8Array): Promise<VolumeInfo> {
    return this.json<VolumeInfo>('/volumes', {
      method: 'POST',
      headers: { 'content-type': 'application/octet-stream' },
      body: data as BodyInit,
    });
  }

  volumeInfo(volumeId: string): Promise<VolumeInfo> {
    return this.json<VolumeInfo>(`/volumes/${volumeId}`);
  }

  createSession(body: {
    volume_id: string;
    class_index?: number | 'zero_shot';
    predictor?: string;
    gt_volume_id?: string;
    tolerance?: number;
  }): Promise<{ session_id: string; version: number }> {
    return this.json('/sessions', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    });
  }

  sessionInfo(sessionId: string): Promise<SessionInfo> {
    return this.json<SessionInfo>(`/sessions/${sessionId}`);
  }

  runAuto(sessionId: string): Promise<{ version: number }> {
    return this.json(`/sessions/${sessionId}/auto`, { method: 'POST' });
  }

  /** POST a click; one silent retry on 409 (another mutation in flight). */
  async postClick(sessionId: string, voxel: Voxel, polarity: Polarity): Promise<ClickResponse> {
    const send = () =>
      this.json<ClickResponse>(`/sessions/${sessionId}/clicks`, {
        method: 'POST',
        headers: { 'content-type': 'application/json' },
        body: JSON.stringify({ xyz: voxel, polarity }),
      });
    try {
      return await send();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        return await send();
      }
      throw err;
    }
  }

  undo(sessionId: string): Promise<{ version: number }> {
    return this.json(`/sessions/${sessionId}/undo`, { method: 'POST' });
  }

  maskSliceRle(sessionId: string, axis: Axis, index: number): Promise<MaskSliceRle> {
    return this.json<MaskSliceRle>(
      `/sessions/${sessionId}/mask/slice?axis=${axis}&index=${index}`,
    );
  }

  async maskNifti(sessionId: string): Promise<ArrayBuffer> {
    const res = await fetch(`${this.baseUrl}/sessions/${sessionId}/mask?format=nifti`);
    if (!res.ok) throw await parseError(res);
    return res.arrayBuffer();
  }

  sliceUrl(volumeId: string, axis: Axis, index: number, windowLo: number, windowHi: number): string {
    return (
      `${this.baseUrl}/volumes/${volumeId}/slice` +
      `?axis=${axis}&index=${index}&window=${windowLo},${windowHi}`
    );
  }
}
