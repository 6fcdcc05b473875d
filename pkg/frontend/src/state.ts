/**
 * Console state reduced purely from the event stream.
 *
 * The reducer implements the event catalog's state-effect column
 * one-to-one, so replaying a stream from seq 0 (or from a snapshot's
 * seq) reconstructs the server's /v1/state snapshot exactly. That
 * equality is what the reconciliation test asserts, and it is the
 * reason the console never mutates state optimistically: a rejected
 * command appends no event, so it must leave no local trace either.
 */
import type {
  DispatcherDoc,
  DriverDoc,
  DriverStatusName,
  EventFrame,
  FacilityDoc,
  RequestDoc,
  RequestStateName,
  RiderDoc,
  StateSnapshot,
} from './protocol.js';

export interface EtaInfo {
  eta_s: number;
  target_node: string;
  ts: number;
}

export interface AlertEntry {
  seq: number;
  kind: string;
  ts: number;
  payload: Record<string, unknown>;
}

export type ApplyResult = 'applied' | 'stale' | 'gap';

const clone = <T>(value: T): T => structuredClone(value);

export class ConsoleState {
  seq: number;
  requests: Record<string, RequestDoc> = {};
  riders: Record<string, RiderDoc> = {};
  drivers: Record<string, DriverDoc> = {};
  dispatchers: Record<string, DispatcherDoc> = {};
  facilities: Record<string, FacilityDoc> = {};

  /** Display-only side channels; not part of snapshot equality. */
  etas: Record<string, EtaInfo> = {};
  alerts: AlertEntry[] = [];
  violations: string[] = [];

  needsResync = false;
  private serverOffsetMs = 0;
  private hasServerTime = false;

  constructor(since = 0) {
    this.seq = since;
  }

  /** Offset between server clock and ours, sampled at frame receipt.
   *  Countdowns are derived from this, never from the local clock alone. */
  noteServerTime(serverTimeIso: string, receivedAtMs: number = Date.now()): void {
    const parsed = Date.parse(serverTimeIso);
    if (!Number.isNaN(parsed)) {
      this.serverOffsetMs = parsed - receivedAtMs;
      this.hasServerTime = true;
    }
  }

  serverNowMs(localNowMs: number = Date.now()): number {
    return localNowMs + this.serverOffsetMs;
  }

  /** Seconds left on a proposal window, clamped at zero. Null when the
   *  request is not awaiting confirmation or no server time was seen yet. */
  countdownS(requestId: string, localNowMs: number = Date.now()): number | null {
    const request = this.requests[requestId];
    if (
      !request ||
      request.state !== 'driver_proposed' ||
      request.window_deadline === null ||
      !this.hasServerTime
    ) {
      return null;
    }
    const remaining = request.window_deadline - this.serverNowMs(localNowMs) / 1000;
    return Math.max(0, remaining);
  }

  /** Pending proposal cards, soonest deadline first. */
  pendingProposals(): RequestDoc[] {
    return Object.values(this.requests)
      .filter((r) => r.state === 'driver_proposed')
      .sort((a, b) => (a.window_deadline ?? 0) - (b.window_deadline ?? 0));
  }

  loadSnapshot(snapshot: StateSnapshot): void {
    this.seq = snapshot.seq;
    this.requests = clone(snapshot.requests);
    this.riders = clone(snapshot.riders);
    this.drivers = clone(snapshot.drivers);
    this.dispatchers = clone(snapshot.dispatchers);
    this.facilities = clone(snapshot.facilities);
    this.needsResync = false;
    this.noteServerTime(snapshot.server_time);
  }

  /** The reducible part of the state, shaped like /v1/state. */
  toSnapshotDoc(): Omit<StateSnapshot, 'server_time'> {
    return {
      seq: this.seq,
      requests: clone(this.requests),
      riders: clone(this.riders),
      drivers: clone(this.drivers),
      dispatchers: clone(this.dispatchers),
      facilities: clone(this.facilities),
    };
  }

  /** Field-for-field comparison against a server snapshot. Returns the
   *  paths that differ (empty array = reconciled). */
  diffSnapshot(snapshot: StateSnapshot): string[] {
    const diffs: string[] = [];
    if (this.seq !== snapshot.seq) diffs.push(`seq: ${this.seq} != ${snapshot.seq}`);
    const sections = ['requests', 'riders', 'drivers', 'dispatchers', 'facilities'] as const;
    for (const section of sections) {
      diffDocs(this[section], snapshot[section], section, diffs);
    }
    return diffs;
  }

  applyEvent(frame: EventFrame, receivedAtMs: number = Date.now()): ApplyResult {
    if (frame.seq <= this.seq) return 'stale';
    if (frame.seq !== this.seq + 1) {
      this.needsResync = true;
      return 'gap';
    }
    this.noteServerTime(frame.server_time, receivedAtMs);
    this.reduce(frame);
    this.seq = frame.seq;
    this.checkInvariants(frame);
    return 'applied';
  }

  // eslint-disable-next-line complexity -- one arm per event kind, mirrors the catalog
  private reduce(frame: EventFrame): void {
    const p = frame.payload;
    const ts = frame.ts;
    switch (frame.kind) {
      case 'rider_registered':
        this.riders[p.rider_id as string] = clone(p) as unknown as RiderDoc;
        break;
      case 'driver_registered':
        this.drivers[p.driver_id as string] = clone(p) as unknown as DriverDoc;
        break;
      case 'dispatcher_registered':
        this.dispatchers[p.dispatcher_id as string] = clone(p) as unknown as DispatcherDoc;
        break;
      case 'facility_registered':
        this.facilities[p.facility_id as string] = clone(p) as unknown as FacilityDoc;
        break;
      case 'dispatcher_duty_changed':
        this.dispatcher(p.dispatcher_id as string).on_duty = p.on_duty as boolean;
        break;
      case 'driver_status_changed': {
        const driver = this.driver(p.driver_id as string);
        driver.status = p.to as DriverStatusName;
        if (driver.status === 'offline' || driver.status === 'available') {
          driver.active_request = null;
        }
        break;
      }
      case 'location_update': {
        const driver = this.driver(p.driver_id as string);
        driver.lat = p.lat as number;
        driver.lon = p.lon as number;
        driver.node = p.node as string;
        break;
      }
      case 'eta_update':
        this.etas[p.request_id as string] = {
          eta_s: p.eta_s as number,
          target_node: p.target_node as string,
          ts,
        };
        break;
      case 'app_open_alert':
      case 'contact_notified':
        this.alerts.push({ seq: frame.seq, kind: frame.kind, ts, payload: clone(p) });
        break;
      case 'request_created':
        this.requests[p.request_id as string] = {
          request_id: p.request_id as string,
          rider: (p.rider as string | null) ?? null,
          lat: p.lat as number,
          lon: p.lon as number,
          origin_node: p.origin_node as string,
          details: (p.details as string) ?? '',
          created_at: p.created_at as number,
          state: 'created',
          proposed_driver: null,
          assigned_driver: null,
          facility: null,
          facility_choice_required: false,
          window_deadline: (p.window_deadline as number | null) ?? null,
          dispatcher: null,
          auto_dispatched: false,
          escalation_reason: null,
          call_open: false,
          timestamps: { created: ts },
        };
        break;
      case 'call_session_opened':
        this.request(p.request_id as string).call_open = true;
        break;
      case 'call_session_closed':
        this.request(p.request_id as string).call_open = false;
        break;
      case 'facility_assigned':
      case 'facility_changed': {
        const request = this.request(p.request_id as string);
        request.facility = p.facility_id as string;
        request.facility_choice_required = false;
        break;
      }
      case 'facility_choice_required':
        this.request(p.request_id as string).facility_choice_required = true;
        break;
      case 'driver_proposed': {
        const request = this.request(p.request_id as string);
        request.state = 'driver_proposed';
        request.proposed_driver = p.driver_id as string;
        request.window_deadline = p.window_deadline as number;
        request.timestamps.proposed = ts;
        const driver = this.driver(p.driver_id as string);
        driver.status = 'proposed';
        driver.active_request = request.request_id;
        break;
      }
      case 'confirmed': {
        const request = this.request(p.request_id as string);
        request.state = 'confirmed';
        request.assigned_driver = p.driver_id as string;
        request.auto_dispatched = p.by === 'auto';
        request.dispatcher = p.by === 'auto' ? null : (p.by as string);
        request.timestamps.confirmed = ts;
        const driver = this.driver(p.driver_id as string);
        driver.status = 'assigned';
        driver.active_request = request.request_id;
        break;
      }
      case 'reassigned': {
        const request = this.request(p.request_id as string);
        this.release(p.from_driver as string);
        request.proposed_driver = p.to_driver as string;
        request.assigned_driver = p.to_driver as string;
        request.state = 'confirmed';
        request.dispatcher = p.by as string;
        request.auto_dispatched = false;
        request.timestamps.confirmed = ts;
        const driver = this.driver(p.to_driver as string);
        driver.status = 'assigned';
        driver.active_request = request.request_id;
        break;
      }
      case 'state_changed': {
        const request = this.request(p.request_id as string);
        const to = p.to as RequestStateName;
        request.state = to;
        request.timestamps[to] = ts;
        const driver = this.driver(p.driver_id as string);
        driver.status = to as DriverStatusName; // en_route / on_scene / transporting mirror 1:1
        if ('driver_lat' in p) {
          driver.lat = p.driver_lat as number;
          driver.lon = p.driver_lon as number;
          driver.node = p.driver_node as string;
        }
        break;
      }
      case 'completed': {
        const request = this.request(p.request_id as string);
        request.state = 'completed';
        request.timestamps.completed = ts;
        const driver = this.driver(p.driver_id as string);
        driver.status = 'available';
        driver.active_request = null;
        driver.lat = p.driver_lat as number;
        driver.lon = p.driver_lon as number;
        driver.node = p.driver_node as string;
        break;
      }
      case 'escalated': {
        const request = this.request(p.request_id as string);
        request.state = 'escalated_to_ems';
        request.escalation_reason = (p.reason as string | null) ?? null;
        request.timestamps.escalated = ts;
        this.release(p.released_driver as string | null);
        break;
      }
      case 'cancelled': {
        const request = this.request(p.request_id as string);
        request.state = 'cancelled';
        request.timestamps.cancelled = ts;
        this.release(p.released_driver as string | null);
        break;
      }
      default:
        // Unknown kinds are forward-compatible no-ops.
        break;
    }
  }

  private release(driverId: string | null | undefined): void {
    if (!driverId) return;
    const driver = this.driver(driverId);
    driver.status = 'available';
    driver.active_request = null;
  }

  private request(id: string): RequestDoc {
    const doc = this.requests[id];
    if (!doc) throw new Error(`event references unknown request ${id}`);
    return doc;
  }

  private driver(id: string): DriverDoc {
    const doc = this.drivers[id];
    if (!doc) throw new Error(`event references unknown driver ${id}`);
    return doc;
  }

  private dispatcher(id: string): DispatcherDoc {
    const doc = this.dispatchers[id];
    if (!doc) throw new Error(`event references unknown dispatcher ${id}`);
    return doc;
  }

  private checkInvariants(frame: EventFrame): void {
    for (const driver of Object.values(this.drivers)) {
      if (
        (driver.status === 'offline' || driver.status === 'available') &&
        driver.active_request !== null
      ) {
        this.violations.push(
          `seq ${frame.seq}: ${driver.driver_id} is ${driver.status} but holds ${driver.active_request}`,
        );
      }
    }
  }
}

function isPlainObject(value: unknown): value is Record<string, unknown> {
  return typeof value === 'object' && value !== null && !Array.isArray(value);
}

function diffDocs(
  ours: unknown,
  theirs: unknown,
  path: string,
  out: string[],
): void {
  if (isPlainObject(ours) && isPlainObject(theirs)) {
    for (const key of new Set([...Object.keys(ours), ...Object.keys(theirs)])) {
      if (!(key in ours)) out.push(`${path}.${key}: missing locally`);
      else if (!(key in theirs)) out.push(`${path}.${key}: missing on server`);
      else diffDocs(ours[key], theirs[key], `${path}.${key}`, out);
    }
    return;
  }
  if (Array.isArray(ours) && Array.isArray(theirs)) {
    if (ours.length !== theirs.length) {
      out.push(`${path}: length ${ours.length} != ${theirs.length}`);
      return;
    }
    ours.forEach((item, i) => diffDocs(item, theirs[i], `${path}[${i}]`, out));
    return;
  }
  if (!Object.is(ours, theirs)) {
    out.push(`${path}: ${JSON.stringify(ours)} != ${JSON.stringify(theirs)}`);
  }
}
