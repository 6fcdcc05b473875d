// Wire types for the motorlance gateway (docs/protocol.md).
// Field names match the JSON exactly; no client-side renaming.

export type RequestStateName =
  | 'created'
  | 'driver_proposed'
  | 'confirmed'
  | 'en_route'
  | 'on_scene'
  | 'transporting'
  | 'completed'
  | 'escalated_to_ems'
  | 'cancelled';

export type DriverStatusName =
  | 'offline'
  | 'available'
  | 'proposed'
  | 'assigned'
  | 'en_route'
  | 'on_scene'
  | 'transporting';

export type VehicleClassName = 'motorcycle' | 'motorlance' | 'ambulance';

export interface RequestDoc {
  request_id: string;
  rider: string | null;
  lat: number;
  lon: number;
  origin_node: string;
  details: string;
  created_at: number;
  state: RequestStateName;
  proposed_driver: string | null;
  assigned_driver: string | null;
  facility: string | null;
  facility_choice_required: boolean;
  window_deadline: number | null;
  dispatcher: string | null;
  auto_dispatched: boolean;
  escalation_reason: string | null;
  call_open: boolean;
  timestamps: Record<string, number>;
}

export interface DriverDoc {
  driver_id: string;
  lat: number;
  lon: number;
  node: string;
  vehicle: VehicleClassName;
  screened: boolean;
  trained: boolean;
  status: DriverStatusName;
  active_request: string | null;
}

export interface RiderDoc {
  rider_id: string;
  registered: boolean;
  name: string | null;
  medical_history: string[];
  emergency_contacts: [string, string][];
  home_region: string | null;
}

export interface DispatcherDoc {
  dispatcher_id: string;
  screened: boolean;
  on_duty: boolean;
}

export interface FacilityDoc {
  facility_id: string;
  lat: number;
  lon: number;
  node: string;
  name: string;
}

export interface StateSnapshot {
  seq: number;
  server_time: string;
  requests: Record<string, RequestDoc>;
  riders: Record<string, RiderDoc>;
  drivers: Record<string, DriverDoc>;
  dispatchers: Record<string, DispatcherDoc>;
  facilities: Record<string, FacilityDoc>;
}

export interface EventFrame {
  seq: number;
  kind: string;
  payload: Record<string, unknown>;
  ts: number;
  server_time: string;
}

export interface HelloFrame {
  kind: 'hello';
  role: string;
  resume_from: number;
  seq: number;
  server_time: string;
}

export interface ErrorBody {
  error: { code: string; message: string };
}

export interface MutationEnvelope {
  seq: number;
  server_time: string;
  request?: RequestDoc;
  driver?: DriverDoc;
  advice?: string;
  [key: string]: unknown;
}
