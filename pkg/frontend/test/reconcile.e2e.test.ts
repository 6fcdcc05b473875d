/**
 * End-to-end reconciliation against a live gateway.
 *
 * Spawns `motorlance serve` on a scratch scenario with a 1.5 s
 * confirmation window, drives a scripted sequence that includes an
 * auto-dispatch expiry and a reassignment rejected as stale, and then
 * asserts the stream-reduced ConsoleState equals the /v1/state
 * snapshot field for field.
 */
import { spawn, type ChildProcess } from 'node:child_process';
import { fileURLToPath } from 'node:url';
import path from 'node:path';
import WebSocket from 'ws';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { ApiError, GatewayClient } from '../src/api.js';
import { DispatcherConsole } from '../src/console.js';
import type { WebSocketLike } from '../src/stream.js';

const here = path.dirname(fileURLToPath(import.meta.url));
const scenario = path.join(here, 'fixtures', 'e2e_scenario.json');
const port = 18000 + (process.pid % 2000);
const httpUrl = `http://127.0.0.1:${port}`;
const wsUrl = `ws://127.0.0.1:${port}`;

// Node a is one hop from the depot at b; see fixtures/e2e_graph.json.
const NODE_A = { lat: 14.58, lon: 121.03 };
const NODE_D = { lat: 14.58, lon: 121.0381 };

let server: ChildProcess;

const dispatcherApi = new GatewayClient({ baseUrl: httpUrl, token: 'dispatcher-token' });
const riderApi = new GatewayClient({ baseUrl: httpUrl });
const driverApi = new GatewayClient({ baseUrl: httpUrl, token: 'driver-token' });

async function waitFor(cond: () => boolean, what: string, timeoutMs = 10_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (cond()) return;
    await new Promise((resolve) => setTimeout(resolve, 25));
  }
  throw new Error(`timed out waiting for ${what}`);
}

beforeAll(async () => {
  server = spawn('motorlance', ['serve', '--scenario', scenario, '--port', String(port)], {
    stdio: ['ignore', 'pipe', 'pipe'],
  });
  const deadline = Date.now() + 20_000;
  for (;;) {
    try {
      await dispatcherApi.getState();
      break;
    } catch {
      if (Date.now() > deadline) throw new Error('gateway did not come up');
      await new Promise((resolve) => setTimeout(resolve, 100));
    }
  }
});

afterAll(() => {
  server?.kill('SIGTERM');
});

describe('console reconciliation', () => {
  it('stream-reduced state matches /v1/state after the scripted sequence', async () => {
    const console_ = new DispatcherConsole({
      httpUrl,
      wsUrl,
      dispatcherToken: 'dispatcher-token',
      socketCtor: WebSocket as unknown as new (url: string) => WebSocketLike,
    });
    console_.startFromHistory();
    const state = console_.state;

    // bootstrap events: 1 facility, 3 drivers (registered + available), dispatcher + duty
    await waitFor(() => Object.keys(state.drivers).length === 3, 'fleet on stream');
    expect(state.dispatchers['ops']?.on_duty).toBe(true);

    // request A: full trip under a manual confirmation
    await riderApi.appOpen();
    const a = (await riderApi.createRequest({ ...NODE_A, details: 'chest pain' }))
      .request!.request_id;
    await waitFor(() => state.requests[a]?.state === 'driver_proposed', 'A proposed');
    expect(state.requests[a]?.proposed_driver).toBe('v000');
    expect(state.countdownS(a)).not.toBeNull();

    await dispatcherApi.confirm(a, 'ops');
    await waitFor(() => state.requests[a]?.state === 'en_route', 'A en route');
    expect(state.requests[a]?.dispatcher).toBe('ops');

    await driverApi.driverLocation('v000', NODE_A.lat, NODE_A.lon);
    await waitFor(() => state.etas[a] !== undefined, 'A eta update');
    await driverApi.progress(a, 'v000', 'arrive_scene');
    await driverApi.progress(a, 'v000', 'begin_transport');
    await driverApi.progress(a, 'v000', 'complete');
    await waitFor(() => state.requests[a]?.state === 'completed', 'A completed');
    expect(state.drivers['v000']?.node).toBe('d');
    expect(state.drivers['v000']?.status).toBe('available');

    // request B: let the 1.5 s window lapse; the poller auto-dispatches
    const b = (await riderApi.createRequest({ ...NODE_A })).request!.request_id;
    await waitFor(() => state.requests[b]?.state === 'driver_proposed', 'B proposed');
    const proposed = state.requests[b]!.proposed_driver!;
    await waitFor(
      () => state.requests[b]?.auto_dispatched === true,
      'B auto-dispatch expiry',
    );
    expect(state.requests[b]?.state).toBe('en_route');
    expect(state.requests[b]?.dispatcher).toBeNull();

    // stale reassignment: the console acted on an already-expired window
    const seqBefore = state.seq;
    const err = await dispatcherApi
      .reassign(b, 'ops', 'v002')
      .then(() => null, (e: unknown) => e as ApiError);
    expect(err).toBeInstanceOf(ApiError);
    expect(err!.status).toBe(409);
    expect(err!.code).toBe('wrong_state');
    // rejected mutations append nothing, so nothing arrives on the stream
    await new Promise((resolve) => setTimeout(resolve, 300));
    expect(state.seq).toBe(seqBefore);
    expect(state.requests[b]?.assigned_driver).toBe(proposed);

    // request C: valid reassignment, facility override, escalation
    const c = (await riderApi.createRequest({ ...NODE_D })).request!.request_id;
    await waitFor(() => state.requests[c]?.state === 'driver_proposed', 'C proposed');
    const first = state.requests[c]!.proposed_driver!;
    await dispatcherApi.reassign(c, 'ops', 'v002');
    await waitFor(() => state.requests[c]?.assigned_driver === 'v002', 'C reassigned');
    expect(state.drivers[first]?.status).toBe('available');
    await dispatcherApi.changeFacility(c, 'ops', 'hosp');
    await dispatcherApi.escalate(c, 'ops', 'needs icu');
    await waitFor(() => state.requests[c]?.state === 'escalated_to_ems', 'C escalated');
    expect(state.drivers['v002']?.status).toBe('available');

    // request D: rider cancels inside the window
    const d = (await riderApi.createRequest({ ...NODE_A })).request!.request_id;
    await waitFor(() => state.requests[d]?.state === 'driver_proposed', 'D proposed');
    await riderApi.cancel(d);
    await waitFor(() => state.requests[d]?.state === 'cancelled', 'D cancelled');

    // wind down the open trip on B, then bounce a driver's duty status
    await dispatcherApi.cancel(b, 'ops');
    await driverApi.driverStatus('v001', 'offline');
    await driverApi.driverStatus('v001', 'available');

    // reconciliation: reduce to the snapshot's seq, then compare
    const snapshot = await dispatcherApi.getState();
    await waitFor(() => state.seq === snapshot.seq, 'console caught up');
    expect(state.needsResync).toBe(false);
    expect(state.violations).toEqual([]);
    expect(state.diffSnapshot(snapshot)).toEqual([]);

    // a console bootstrapping late (snapshot + resume) converges too
    const late = new DispatcherConsole({
      httpUrl,
      wsUrl,
      dispatcherToken: 'dispatcher-token',
      socketCtor: WebSocket as unknown as new (url: string) => WebSocketLike,
    });
    await late.start();
    await driverApi.driverStatus('v001', 'offline');
    const finalSnapshot = await dispatcherApi.getState();
    await waitFor(() => late.state.seq === finalSnapshot.seq, 'late console caught up');
    await waitFor(() => state.seq === finalSnapshot.seq, 'first console caught up');
    expect(late.state.diffSnapshot(finalSnapshot)).toEqual([]);
    expect(state.diffSnapshot(finalSnapshot)).toEqual([]);

    console_.stop();
    late.stop();
  });
});
