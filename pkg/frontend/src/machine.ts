// Connection state machine for the event subscription. Kept as an explicit
// transition table so tests can model-check it: every state reachable,
// no dead states, no transitions out of the state set.

export type ConnState = "disconnected" | "connecting" | "live" | "degraded";

export type ConnEvent = "connect" | "open" | "degrade" | "recover" | "drop";

export const STATES: readonly ConnState[] = ["disconnected", "connecting", "live", "degraded"];

export const TRANSITIONS: Record<ConnState, Partial<Record<ConnEvent, ConnState>>> = {
  disconnected: { connect: "connecting" },
  connecting: { open: "live", drop: "disconnected" },
  live: { degrade: "degraded", drop: "disconnected" },
  degraded: { recover: "live", degrade: "degraded", drop: "disconnected" },
};

export function transition(state: ConnState, event: ConnEvent): ConnState {
  return TRANSITIONS[state][event] ?? state;
}
