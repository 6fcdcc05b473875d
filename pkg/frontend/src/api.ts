// Typed HTTP client for the gateway. Every failure is an ApiError
// carrying the server's error code; callers never need to parse bodies.
import type { MutationEnvelope, RequestDoc, StateSnapshot } from './protocol.js';

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

export interface ApiOptions {
  baseUrl: string;
  token?: string;
  fetchImpl?: typeof fetch;
}

export class GatewayClient {
  private readonly baseUrl: string;
  private readonly token?: string;
  private readonly fetchImpl: typeof fetch;

  constructor(options: ApiOptions) {
    this.baseUrl = options.baseUrl.replace(/\/$/, '');
    this.token = options.token;
    this.fetchImpl = options.fetchImpl ?? fetch;
  }

  private async call<T>(method: 'GET' | 'POST', path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {};
    if (this.token) headers['Authorization'] = `Bearer ${this.token}`;
    if (method === 'POST') headers['Content-Type'] = 'application/json';
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers,
      body: method === 'POST' ? JSON.stringify(body ?? {}) : undefined,
    });
    const doc = (await response.json()) as Record<string, unknown>;
    if (!response.ok) {
      const err = (doc as { error?: { code?: string; message?: string } }).error ?? {};
      throw new ApiError(response.status, err.code ?? 'error', err.message ?? 'request failed');
    }
    return doc as T;
  }

  appOpen(riderId?: string): Promise<MutationEnvelope> {
    return this.call('POST', '/v1/app-open', riderId ? { rider_id: riderId } : {});
  }

  createRequest(body: {
    lat: number;
    lon: number;
    rider_id?: string;
    details?: string;
  }): Promise<MutationEnvelope> {
    return this.call('POST', '/v1/requests', body);
  }

  getRequest(id: string): Promise<{ request: RequestDoc; seq: number; server_time: string }> {
    return this.call('GET', `/v1/requests/${id}`);
  }

  getEta(id: string): Promise<{ request_id: string; eta_s: number; seq: number }> {
    return this.call('GET', `/v1/requests/${id}/eta`);
  }

  confirm(id: string, dispatcherId: string): Promise<MutationEnvelope> {
    return this.call('POST', `/v1/requests/${id}/confirm`, { dispatcher_id: dispatcherId });
  }

  reassign(id: string, dispatcherId: string, driverId: string): Promise<MutationEnvelope> {
    return this.call('POST', `/v1/requests/${id}/reassign`, {
      dispatcher_id: dispatcherId,
      driver_id: driverId,
    });
  }

  changeFacility(id: string, dispatcherId: string, facilityId: string): Promise<MutationEnvelope> {
    return this.call('POST', `/v1/requests/${id}/facility`, {
      dispatcher_id: dispatcherId,
      facility_id: facilityId,
    });
  }

  escalate(id: string, dispatcherId?: string, reason?: string): Promise<MutationEnvelope> {
    return this.call('POST', `/v1/requests/${id}/escalate`, {
      ...(dispatcherId ? { dispatcher_id: dispatcherId } : {}),
      ...(reason ? { reason } : {}),
    });
  }

  cancel(id: string, actor?: string): Promise<MutationEnvelope> {
    return this.call('POST', `/v1/requests/${id}/cancel`, actor ? { actor } : {});
  }

  progress(
    id: string,
    driverId: string,
    transition: 'arrive_scene' | 'begin_transport' | 'complete',
  ): Promise<MutationEnvelope> {
    return this.call('POST', `/v1/requests/${id}/progress`, {
      driver_id: driverId,
      transition,
    });
  }

  driverLocation(driverId: string, lat: number, lon: number): Promise<MutationEnvelope> {
    return this.call('POST', `/v1/drivers/${driverId}/location`, { lat, lon });
  }

  driverStatus(driverId: string, status: string): Promise<MutationEnvelope> {
    return this.call('POST', `/v1/drivers/${driverId}/status`, { status });
  }

  getState(): Promise<StateSnapshot> {
    return this.call('GET', '/v1/state');
  }
}
