// Workspace state machine. Every server-backed action is a request class
// with at most one request in flight; responses carry the request id that
// started them and stale responses are discarded.

import type { CandidateDescriptor, ImageDescriptor } from "./types.js";

export type RequestKind = "submit" | "depths" | "shift" | "images";

export interface WorkspaceState {
  sessionId: string | null;
  labelSet: string[];
  resolution: number;
  segSubmitted: boolean;
  candidates: CandidateDescriptor[];
  selectedCandidate: string | null;
  images: ImageDescriptor[];
  inFlight: Partial<Record<RequestKind, number>>;
  nextRequestId: number;
  error: string | null;
}

export function initialWorkspace(): WorkspaceState {
  return {
    sessionId: null,
    labelSet: [],
    resolution: 0,
    segSubmitted: false,
    candidates: [],
    selectedCandidate: null,
    images: [],
    inFlight: {},
    nextRequestId: 1,
    error: null,
  };
}

export function withSession(
  ws: WorkspaceState,
  sessionId: string,
  labelSet: string[],
  resolution: number,
): WorkspaceState {
  return { ...ws, sessionId, labelSet, resolution };
}

export function canStart(ws: WorkspaceState, kind: RequestKind): boolean {
  return ws.inFlight[kind] === undefined;
}

/** Returns [state, requestId]; requestId is null when one is already in flight. */
export function beginRequest(ws: WorkspaceState, kind: RequestKind): [WorkspaceState, number | null] {
  if (!canStart(ws, kind)) return [ws, null];
  const id = ws.nextRequestId;
  return [
    { ...ws, inFlight: { ...ws.inFlight, [kind]: id }, nextRequestId: id + 1, error: null },
    id,
  ];
}

function settle(ws: WorkspaceState, kind: RequestKind): WorkspaceState {
  const inFlight = { ...ws.inFlight };
  delete inFlight[kind];
  return { ...ws, inFlight };
}

function isStale(ws: WorkspaceState, kind: RequestKind, id: number): boolean {
  return ws.inFlight[kind] !== id;
}

export function completeSubmit(ws: WorkspaceState, id: number): WorkspaceState {
  if (isStale(ws, "submit", id)) return ws;
  return { ...settle(ws, "submit"), segSubmitted: true };
}

export function completeDepths(
  ws: WorkspaceState,
  id: number,
  candidates: CandidateDescriptor[],
): WorkspaceState {
  if (isStale(ws, "depths", id)) return ws;
  const next = settle(ws, "depths");
  return {
    ...next,
    candidates: [...next.candidates, ...candidates],
    selectedCandidate: next.selectedCandidate ?? candidates[0]?.candidate_id ?? null,
  };
}

export function completeShift(
  ws: WorkspaceState,
  id: number,
  forked: CandidateDescriptor,
): WorkspaceState {
  if (isStale(ws, "shift", id)) return ws;
  const next = settle(ws, "shift");
  return {
    ...next,
    candidates: [...next.candidates, forked],
    selectedCandidate: forked.candidate_id,
  };
}

export function completeImages(
  ws: WorkspaceState,
  id: number,
  images: ImageDescriptor[],
): WorkspaceState {
  if (isStale(ws, "images", id)) return ws;
  const next = settle(ws, "images");
  return { ...next, images: [...next.images, ...images] };
}

/** Surface the server's message verbatim; the gallery stays as it was. */
export function failRequest(
  ws: WorkspaceState,
  kind: RequestKind,
  id: number,
  message: string,
): WorkspaceState {
  if (isStale(ws, kind, id)) return ws;
  return { ...settle(ws, kind), error: message };
}

export function clearError(ws: WorkspaceState): WorkspaceState {
  return { ...ws, error: null };
}

export function selectCandidate(ws: WorkspaceState, candidateId: string): WorkspaceState {
  if (!ws.candidates.some((c) => c.candidate_id === candidateId)) return ws;
  return { ...ws, selectedCandidate: candidateId };
}

export function selectedCandidate(ws: WorkspaceState): CandidateDescriptor | null {
  return ws.candidates.find((c) => c.candidate_id === ws.selectedCandidate) ?? null;
}

export interface SliderBounds {
  min: number;
  max: number;
}

// One 16-bit storage step of headroom keeps the bound strictly inside the
// region the server will accept.
const BOUND_MARGIN = 1 / 65535;

/**
 * Largest shift of one label's depth that cannot flip the mean ordering,
 * computed from the candidate's per-segment mean badges. A uniform shift of
 * delta moves the segment mean by exactly delta (absent clamping), so the
 * safe range is the gap to the nearest neighbor mean on each side.
 */
export function sliderBounds(candidate: CandidateDescriptor, label: string): SliderBounds {
  const means = candidate.segment_means;
  const own = means[label];
  if (own === undefined) return { min: 0, max: 0 };
  let above = Infinity;
  let below = -Infinity;
  for (const [other, mean] of Object.entries(means)) {
    if (other === label) continue;
    if (mean >= own) above = Math.min(above, mean - own);
    if (mean <= own) below = Math.max(below, mean - own);
  }
  const max = above === Infinity ? 1 - own : Math.max(0, above - BOUND_MARGIN);
  const min = below === -Infinity ? -own : Math.min(0, below + BOUND_MARGIN);
  return { min, max };
}
