import { describe, expect, it } from "vitest";

import type { CaseDetail, EventRecord } from "../src/api.js";
import {
  actionsForRole,
  actorForRole,
  bannerText,
  panelLines,
} from "../src/view.js";

const baseDetail: CaseDetail = {
  case_id: "sim-1-c1",
  case_no: 1,
  community_id: "sim-1",
  offender_id: "off-1",
  victim_id: "vic-1",
  moderator_id: "mod-1",
  mute_duration: 3600,
  mute_until: "2025-01-01T01:00:00Z",
  reason: "insult",
  review_request: false,
  created_at: "2025-01-01T00:00:00Z",
  state: "await_victim_request",
  apology_request: null,
  apology_response: null,
  attempt_count: 0,
  furthest_stage: "await_victim_request",
  closure: null,
  version: 1,
  pending_actions: [
    { action: "vreq_yes", role: "victim", label: "Yes", opens_modal: true },
    { action: "vreq_no", role: "victim", label: "No", opens_modal: false },
  ],
};

const opened: EventRecord = {
  seq: 1,
  at: "2025-01-01T00:00:00Z",
  actor: "mod-1",
  kind: "case_opened",
  payload: { duration: "1h", reason: "insult" },
};

describe("panel mapping", () => {
  it("routes the opening prompt to the victim panel and the log", () => {
    const lines = panelLines([opened], baseDetail);
    const panels = lines.map((l) => l.panel);
    expect(panels).toEqual(["victim", "log"]);
    expect(lines[0].text).toContain("off-1 was muted");
    expect(lines[0].text).toContain("request an apology");
  });

  it("shows the request in both private threads", () => {
    const request: EventRecord = {
      seq: 2,
      at: "2025-01-01T00:05:00Z",
      actor: "vic-1",
      kind: "victim_requested",
      payload: { text: "own it" },
    };
    const lines = panelLines([opened, request], baseDetail);
    const offenderLine = lines.find((l) => l.panel === "offender");
    expect(offenderLine?.text).toContain("> own it");
    expect(lines.filter((l) => l.panel === "log")).toHaveLength(2);
  });

  it("forwards the approved apology text into the victim panel", () => {
    const detail = { ...baseDetail, apology_response: "truly sorry" };
    const approved: EventRecord = {
      seq: 4,
      at: "2025-01-01T00:20:00Z",
      actor: "mod-1",
      kind: "response_approved",
      payload: {},
    };
    const lines = panelLines([approved], detail);
    expect(lines[0].panel).toBe("victim");
    expect(lines[0].text).toContain("truly sorry");
    expect(lines[0].text).toContain("Do you accept");
  });
});

describe("banner", () => {
  it("is absent while the case is open", () => {
    expect(bannerText(baseDetail)).toBeNull();
  });

  it("labels full restoration", () => {
    const detail: CaseDetail = {
      ...baseDetail,
      state: "resolved_restored",
      closure: {
        reason: "restored",
        furthest_stage: "await_unmute",
        closed_at: "2025-01-01T00:30:00Z",
      },
      outcome: { label: "full_restoration" },
      pending_actions: [],
    };
    expect(bannerText(detail)).toBe("Full restoration · restored");
  });

  it("labels no engagement with the closure reason", () => {
    const detail: CaseDetail = {
      ...baseDetail,
      state: "closed_punitive",
      closure: {
        reason: "victim_declined",
        furthest_stage: "await_victim_request",
        closed_at: "2025-01-01T00:30:00Z",
      },
      outcome: { label: "no_engagement" },
      pending_actions: [],
    };
    expect(bannerText(detail)).toBe("No engagement · victim_declined");
  });

  it("includes the furthest stage for partial engagement", () => {
    const detail: CaseDetail = {
      ...baseDetail,
      state: "closed_punitive",
      closure: {
        reason: "victim_rejected",
        furthest_stage: "await_victim_verdict",
        closed_at: "2025-01-01T00:30:00Z",
      },
      outcome: { label: "partial_engagement", furthest_stage: "await_victim_verdict" },
      pending_actions: [],
    };
    expect(bannerText(detail)).toBe(
      "Partial engagement (reached await_victim_verdict) · victim_rejected"
    );
  });
});

describe("role scoping", () => {
  it("only offers a role its own actions", () => {
    expect(actionsForRole(baseDetail, "victim").map((a) => a.action)).toEqual([
      "vreq_yes",
      "vreq_no",
    ]);
    expect(actionsForRole(baseDetail, "offender")).toEqual([]);
    expect(actionsForRole(baseDetail, "moderator")).toEqual([]);
  });

  it("maps tabs to the case parties", () => {
    expect(actorForRole(baseDetail, "victim", "mod-1")).toBe("vic-1");
    expect(actorForRole(baseDetail, "offender", "mod-1")).toBe("off-1");
    expect(actorForRole(baseDetail, "moderator", "mod-9")).toBe("mod-9");
  });
});
