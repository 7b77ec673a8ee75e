/** Round-trip console test against a real service process.
 *
 * Spawns the Python service with the simulated binding, then drives two
 * cases through the rendered DOM: one all-approve run to full restoration
 * and one victim decline, asserting the terminal banners. */

import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ConsoleApp } from "../src/app.js";

const PORT = 8713 + Math.floor(Math.random() * 200);
const BASE = `http://127.0.0.1:${PORT}`;
const TOKEN = "console-mod";

let server: ChildProcess;

async function waitFor(
  condition: () => boolean | Promise<boolean>,
  what: string,
  timeoutMs = 20_000
): Promise<void> {
  const start = Date.now();
  while (Date.now() - start < timeoutMs) {
    if (await condition()) return;
    await new Promise((resolve) => setTimeout(resolve, 50));
  }
  throw new Error(`timed out waiting for ${what}`);
}

beforeAll(async () => {
  const dir = mkdtempSync(join(tmpdir(), "apolo-console-"));
  const config = join(dir, "apolobot.toml");
  writeFileSync(
    config,
    `data_dir = "${join(dir, "data")}"\n\n` +
      `[api]\nbind = "127.0.0.1:${PORT}"\n\n` +
      `[[api.tokens]]\ntoken = "${TOKEN}"\nscope = "moderate"\n`
  );
  server = spawn("python3", ["-m", "apolobot.cli", "run", "--config", config, "--sim"], {
    stdio: ["ignore", "pipe", "pipe"],
  });
  server.stderr?.on("data", () => {});
  await waitFor(async () => {
    try {
      const response = await fetch(`${BASE}/v1/healthz`);
      return response.ok;
    } catch {
      return false;
    }
  }, "service healthz", 60_000);
}, 90_000);

afterAll(() => {
  server?.kill("SIGTERM");
});

function mount(): ConsoleApp {
  document.body.innerHTML = '<div id="app"></div>';
  const app = new ConsoleApp(document.getElementById("app")!, {
    baseUrl: BASE,
    token: TOKEN,
    pollMs: 0, // tests drive refresh() deterministically
  });
  return app;
}

function click(selector: string): void {
  const node = document.querySelector<HTMLElement>(selector);
  if (!node) throw new Error(`nothing to click at ${selector}`);
  node.click();
}

async function clickAction(app: ConsoleApp, action: string): Promise<void> {
  await waitFor(
    () => document.querySelector(`[data-action="${action}"]`) !== null,
    `action button ${action}`
  );
  click(`[data-action="${action}"]`);
}

async function submitModal(app: ConsoleApp, text: string): Promise<void> {
  await waitFor(
    () => document.querySelector("#modal-text") !== null,
    "modal text input"
  );
  document.querySelector<HTMLTextAreaElement>("#modal-text")!.value = text;
  click("#modal-submit");
  await waitFor(() => document.querySelector("#modal-text") === null, "modal close");
}

async function openCase(app: ConsoleApp): Promise<void> {
  click("#create-community");
  await waitFor(() => app.communityId !== null, "community creation");
  click("#open-case");
  await waitFor(() => app.caseId !== null && app.detail !== null, "case open");
  app.stopPolling();
}

function banner(): string {
  return document.querySelector("#banner")!.textContent ?? "";
}

describe("role-play console round trip", () => {
  it("drives an all-approve case to a Full restoration banner", async () => {
    const app = mount();
    await openCase(app);

    click('[data-role="victim"]');
    await clickAction(app, "vreq_yes");
    await submitModal(app, "please say sorry");
    expect(app.detail?.state).toBe("await_offender_apology");

    click('[data-role="offender"]');
    await clickAction(app, "oapo_yes");
    await submitModal(app, "I am sorry, truly");
    expect(app.detail?.state).toBe("await_response_review");

    click('[data-role="moderator"]');
    await clickAction(app, "mres_ok");
    await waitFor(() => app.detail?.state === "await_victim_verdict", "verdict stage");

    click('[data-role="victim"]');
    await clickAction(app, "vfin_ok");
    await waitFor(() => app.detail?.state === "await_unmute", "unmute stage");

    click('[data-role="moderator"]');
    await clickAction(app, "unmute");
    await waitFor(() => banner().length > 0, "terminal banner");

    expect(banner()).toContain("Full restoration");
    expect(banner()).toContain("restored");
    expect(app.detail?.outcome?.label).toBe("full_restoration");
  });

  it("drives a victim decline to a No engagement banner", async () => {
    const app = mount();
    await openCase(app);

    click('[data-role="victim"]');
    await clickAction(app, "vreq_no");
    await waitFor(() => banner().length > 0, "terminal banner");

    expect(banner()).toContain("No engagement");
    expect(banner()).toContain("victim_declined");
    expect(app.detail?.outcome?.label).toBe("no_engagement");
  });

  it("surfaces a 403 as an inline notice when the wrong tab acts", async () => {
    const app = mount();
    await openCase(app);

    app.selectRole("victim");
    await app.submitAction("oapo_yes", "not mine to send");
    const notice = document.querySelector("#notice")!.textContent ?? "";
    expect(notice).toContain("Not your decision");
    expect(notice).toContain("403");
    expect(app.detail?.state).toBe("await_victim_request"); // unchanged
  });

  it("surfaces a 409 when pressing a stale button", async () => {
    const app = mount();
    await openCase(app);

    // the case advances behind the console's back
    await app.api.act(app.caseId!, "vreq_yes", app.detail!.victim_id, "hi");
    app.selectRole("victim");
    await app.submitAction("vreq_no"); // stale: rendered before the advance
    const notice = document.querySelector("#notice")!.textContent ?? "";
    expect(notice).toContain("Already handled");
    expect(notice).toContain("409");
  });

  it("observer mode renders all three panels read-only", async () => {
    const app = mount();
    await openCase(app);
    app.setObserver(true);
    expect(document.querySelector("#panel-victim")).not.toBeNull();
    expect(document.querySelector("#panel-offender")).not.toBeNull();
    expect(document.querySelector("#panel-log")).not.toBeNull();
    expect(document.querySelector("#actions")).toBeNull();
  });

  it("a stage timeout lands as a punitive banner without any client action", async () => {
    const app = mount();
    click("#create-community");
    await waitFor(() => app.communityId !== null, "community creation");
    // 1-second stage timers via config override, then just wait
    const quick = await app.api.createCommunity({ default_stage_timeout: 1 });
    app.communityId = quick.community_id;
    click("#open-case");
    await waitFor(() => app.caseId !== null, "case open");
    await waitFor(async () => {
      await app.refresh();
      return banner().length > 0;
    }, "timeout banner", 30_000);
    expect(banner()).toContain("No engagement");
    expect(banner()).toContain("victim_timeout");
  });
});
