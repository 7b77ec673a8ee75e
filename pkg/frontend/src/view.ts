/** Presentation mapping: server events become panel lines, outcomes become
 * banner text. No workflow decisions happen here; the server's case detail
 * (state, pending actions, outcome) is the only authority. */

import type { CaseDetail, EventRecord, PendingAction } from "./api.js";

export type Role = "moderator" | "victim" | "offender";
export type Panel = "victim" | "offender" | "log";

export interface PanelLine {
  panel: Panel;
  text: string;
}

const text = (event: EventRecord, key = "text"): string =>
  String(event.payload?.[key] ?? "");

/** Which panels a given event shows up in, and as what line. */
export function eventLines(event: EventRecord, detail: CaseDetail): PanelLine[] {
  const victim = detail.victim_id;
  const offender = detail.offender_id;
  switch (event.kind) {
    case "case_opened":
      return [
        {
          panel: "victim",
          text: `${offender} was muted (${text(event, "duration")}, reason: ${text(event, "reason")}). Would you like to request an apology? If the process completes, the mute may be lifted early.`,
        },
        { panel: "log", text: `case opened by ${event.actor}; ${offender} muted` },
      ];
    case "victim_declined":
      return [
        { panel: "victim", text: "You declined to request an apology." },
        { panel: "log", text: "victim declined; case closed punitively" },
      ];
    case "victim_requested":
      return [
        { panel: "victim", text: `You asked for an apology: "${text(event)}"` },
        {
          panel: "offender",
          text: `${victim} requested an apology:\n> ${text(event)}\nAn appropriate apology can lift your mute early. Respond?`,
        },
        { panel: "log", text: `victim requested an apology: "${text(event)}"` },
      ];
    case "request_approved":
      return [{ panel: "log", text: "request approved; offender prompted" }];
    case "request_rejected":
      return [{ panel: "log", text: "request rejected; case closed punitively" }];
    case "offender_declined":
      return [
        { panel: "offender", text: "You declined to apologize." },
        { panel: "log", text: "offender declined; case closed punitively" },
      ];
    case "offender_apologized":
      return [
        { panel: "offender", text: `You wrote: "${text(event)}"` },
        { panel: "log", text: `offender apologized: "${text(event)}" (awaiting review)` },
      ];
    case "response_approved":
      return [
        {
          panel: "victim",
          text: `The offender sent this apology:\n> ${detail.apology_response ?? ""}\nDo you accept it?`,
        },
        { panel: "log", text: "response approved; forwarded to the victim" },
      ];
    case "response_rejected":
      return [
        { panel: "offender", text: "Moderators asked for a better apology." },
        { panel: "log", text: "response rejected" },
      ];
    case "victim_accepted":
      return [
        { panel: "victim", text: "You accepted the apology." },
        { panel: "log", text: "victim accepted; the offender can be unmuted" },
      ];
    case "victim_rejected":
      return [
        { panel: "victim", text: "You rejected the apology." },
        { panel: "log", text: "victim rejected; case closed punitively" },
      ];
    case "unmute_executed":
      return [{ panel: "log", text: `${offender} unmuted early; case restored` }];
    case "stage_timed_out":
      return [{ panel: "log", text: `stage timer expired (${text(event, "stage")})` }];
    case "mute_elapsed":
      return [{ panel: "log", text: "mute ran out; case closed" }];
    case "moderator_cancelled":
      return [{ panel: "log", text: `moderator cancelled the case: ${text(event, "note")}` }];
    case "satisfaction_recorded":
      return [
        {
          panel: "log",
          text: `${text(event, "role")} rated the process ${String(event.payload?.rating)}/5`,
        },
      ];
    default:
      return [{ panel: "log", text: event.kind }];
  }
}

export function panelLines(events: EventRecord[], detail: CaseDetail): PanelLine[] {
  return events.flatMap((event) => eventLines(event, detail));
}

const OUTCOME_TEXT: Record<string, string> = {
  full_restoration: "Full restoration",
  partial_engagement: "Partial engagement",
  no_engagement: "No engagement",
  punitive_fallback: "Punitive fallback",
};

/** Terminal banner: outcome class plus the closure reason. */
export function bannerText(detail: CaseDetail): string | null {
  if (!detail.outcome || !detail.closure) return null;
  const label = OUTCOME_TEXT[detail.outcome.label] ?? detail.outcome.label;
  const stage = detail.outcome.furthest_stage
    ? ` (reached ${detail.outcome.furthest_stage})`
    : "";
  return `${label}${stage} · ${detail.closure.reason}`;
}

/** The actions the active role tab may offer (the server re-checks anyway). */
export function actionsForRole(detail: CaseDetail, role: Role): PendingAction[] {
  return detail.pending_actions.filter((action) => action.role === role);
}

/** Who a role tab speaks as for this case. */
export function actorForRole(detail: CaseDetail, role: Role, moderator: string): string {
  if (role === "victim") return detail.victim_id;
  if (role === "offender") return detail.offender_id;
  return moderator;
}
