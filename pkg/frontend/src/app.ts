/** Role-play console: one person plays moderator, victim, and offender
 * against live cases. Pure API client; every render reflects server truth
 * (no optimistic UI), polled once a second. */

import { ApiClient, ApiError, CaseDetail, EventRecord } from "./api.js";
import {
  Panel,
  Role,
  actionsForRole,
  actorForRole,
  bannerText,
  panelLines,
} from "./view.js";

const ROLES: Role[] = ["moderator", "victim", "offender"];
const PANELS: Panel[] = ["victim", "offender", "log"];

export interface AppOptions {
  baseUrl: string;
  token?: string;
  pollMs?: number;
}

export class ConsoleApp {
  readonly api: ApiClient;
  private pollMs: number;
  private timer: ReturnType<typeof setInterval> | null = null;

  communityId: string | null = null;
  moderatorId = "mod-1";
  caseId: string | null = null;
  role: Role = "moderator";
  observer = false;
  detail: CaseDetail | null = null;
  events: EventRecord[] = [];
  private modalAction: string | null = null;

  constructor(private root: HTMLElement, options: AppOptions) {
    this.api = new ApiClient(options.baseUrl, options.token ?? "");
    this.pollMs = options.pollMs ?? 1000;
    this.renderShell();
  }

  // -- session ------------------------------------------------------------------

  setToken(token: string): void {
    this.api.setToken(token);
  }

  async createCommunity(config: Record<string, unknown> = {}): Promise<string> {
    const info = await this.guard(() => this.api.createCommunity(config));
    this.communityId = info.community_id;
    this.moderatorId = info.moderators[0] ?? "mod-1";
    this.caseId = null;
    this.detail = null;
    this.events = [];
    this.render();
    return info.community_id;
  }

  async openCase(form: {
    offender: string;
    victim: string;
    duration: string;
    reason: string;
    review_request: boolean;
  }): Promise<string> {
    if (!this.communityId) throw new Error("create a community first");
    const opened = await this.guard(() =>
      this.api.openCase({ community_id: this.communityId!, ...form })
    );
    this.caseId = opened.case_id;
    await this.refresh();
    this.startPolling();
    return opened.case_id;
  }

  selectRole(role: Role): void {
    this.role = role;
    this.modalAction = null;
    this.render();
  }

  setObserver(on: boolean): void {
    this.observer = on;
    this.render();
  }

  /** Pull server truth for the open case and re-render. */
  async refresh(): Promise<void> {
    if (!this.caseId) return;
    try {
      const [detail, events] = await Promise.all([
        this.api.getCase(this.caseId),
        this.api.getEvents(this.caseId),
      ]);
      this.detail = detail;
      this.events = events.events;
      if (detail.closure) this.stopPolling();
    } catch (error) {
      this.showNotice(error);
    }
    this.render();
  }

  /** Send an action as the active role; 403/409 become inline notices. */
  async submitAction(action: string, text?: string): Promise<void> {
    if (!this.caseId || !this.detail) return;
    const actor = actorForRole(this.detail, this.role, this.moderatorId);
    try {
      this.detail = await this.api.act(this.caseId, action, actor, text);
      this.modalAction = null;
      this.clearNotice();
    } catch (error) {
      this.showNotice(error);
    }
    await this.refresh();
  }

  startPolling(): void {
    this.stopPolling();
    if (this.pollMs > 0) {
      this.timer = setInterval(() => void this.refresh(), this.pollMs);
    }
  }

  stopPolling(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  private async guard<T>(call: () => Promise<T>): Promise<T> {
    try {
      const result = await call();
      this.clearNotice();
      return result;
    } catch (error) {
      this.showNotice(error);
      throw error;
    }
  }

  // -- notices ---------------------------------------------------------------------

  private showNotice(error: unknown): void {
    const node = this.root.querySelector("#notice")!;
    if (error instanceof ApiError) {
      const friendly =
        error.status === 403
          ? "Not your decision."
          : error.status === 409
            ? "Already handled."
            : error.detail;
      node.textContent = `${friendly} (${error.status})`;
    } else {
      node.textContent = String(error);
    }
    node.className = "notice visible";
  }

  private clearNotice(): void {
    const node = this.root.querySelector("#notice")!;
    node.textContent = "";
    node.className = "notice";
  }

  // -- rendering ---------------------------------------------------------------------

  private renderShell(): void {
    this.root.innerHTML = `
      <header>
        <h1>apolobot sandbox</h1>
        <div id="session">
          <input id="token" type="password" placeholder="API token (sim scope)">
          <button id="create-community">Create sim community</button>
          <span id="community-id" class="pill"></span>
          <label class="observer"><input id="observer" type="checkbox"> observer</label>
        </div>
      </header>
      <section id="case-form">
        <input id="f-offender" placeholder="offender id" value="offender-1">
        <input id="f-victim" placeholder="victim id" value="victim-1">
        <input id="f-duration" placeholder="duration (e.g. 1h)" value="1h">
        <input id="f-reason" placeholder="reason" value="insult">
        <label><input id="f-review" type="checkbox"> review request first</label>
        <button id="open-case" disabled>Open case</button>
        <span id="case-id" class="pill"></span>
      </section>
      <div id="notice" class="notice"></div>
      <div id="banner" class="banner"></div>
      <nav id="tabs"></nav>
      <main id="panels"></main>
      <div id="modal"></div>
    `;
    const tokenInput = this.root.querySelector<HTMLInputElement>("#token")!;
    tokenInput.addEventListener("change", () => this.setToken(tokenInput.value));
    this.root
      .querySelector("#create-community")!
      .addEventListener("click", () => void this.createCommunity());
    this.root.querySelector("#open-case")!.addEventListener("click", () => {
      const value = (id: string) =>
        this.root.querySelector<HTMLInputElement>(id)!.value;
      void this.openCase({
        offender: value("#f-offender"),
        victim: value("#f-victim"),
        duration: value("#f-duration"),
        reason: value("#f-reason"),
        review_request:
          this.root.querySelector<HTMLInputElement>("#f-review")!.checked,
      });
    });
    const observer = this.root.querySelector<HTMLInputElement>("#observer")!;
    observer.addEventListener("change", () => this.setObserver(observer.checked));
    this.render();
  }

  private render(): void {
    this.root.querySelector("#community-id")!.textContent = this.communityId ?? "";
    this.root.querySelector("#case-id")!.textContent = this.caseId ?? "";
    this.root.querySelector<HTMLButtonElement>("#open-case")!.disabled =
      this.communityId === null;
    this.renderTabs();
    this.renderBanner();
    this.renderPanels();
    this.renderModal();
  }

  private renderTabs(): void {
    const nav = this.root.querySelector("#tabs")!;
    nav.innerHTML = "";
    for (const role of ROLES) {
      const button = document.createElement("button");
      button.textContent = role;
      button.dataset.role = role;
      button.className = role === this.role && !this.observer ? "tab active" : "tab";
      button.addEventListener("click", () => this.selectRole(role));
      nav.appendChild(button);
    }
  }

  private renderBanner(): void {
    const node = this.root.querySelector("#banner")!;
    const text = this.detail ? bannerText(this.detail) : null;
    node.textContent = text ?? "";
    node.className = text ? "banner visible" : "banner";
  }

  private visiblePanels(): Panel[] {
    if (this.observer) return PANELS;
    if (this.role === "moderator") return ["log"];
    return [this.role];
  }

  private renderPanels(): void {
    const main = this.root.querySelector("#panels")!;
    main.innerHTML = "";
    if (!this.detail) return;
    const lines = panelLines(this.events, this.detail);
    for (const panel of this.visiblePanels()) {
      const section = document.createElement("section");
      section.className = "panel";
      section.id = `panel-${panel}`;
      const title = document.createElement("h2");
      title.textContent =
        panel === "log"
          ? `log · update-case-${this.detail.case_no}`
          : `${panel} thread`;
      section.appendChild(title);
      for (const line of lines.filter((l) => l.panel === panel)) {
        const p = document.createElement("p");
        p.textContent = line.text;
        section.appendChild(p);
      }
      main.appendChild(section);
    }
    this.renderActions(main);
  }

  private renderActions(main: Element): void {
    if (!this.detail || this.observer) return;
    const actions = actionsForRole(this.detail, this.role);
    if (actions.length === 0) return;
    const bar = document.createElement("div");
    bar.id = "actions";
    for (const action of actions) {
      const button = document.createElement("button");
      button.textContent = action.label;
      button.dataset.action = action.action;
      button.addEventListener("click", () => {
        if (action.opens_modal) {
          this.modalAction = action.action;
          this.render();
        } else {
          void this.submitAction(action.action);
        }
      });
      bar.appendChild(button);
    }
    main.appendChild(bar);
  }

  private renderModal(): void {
    const host = this.root.querySelector("#modal")!;
    host.innerHTML = "";
    if (this.modalAction === null) return;
    const box = document.createElement("div");
    box.className = "modal-box";
    const label = document.createElement("p");
    label.textContent =
      this.modalAction === "vreq_yes" ? "Your apology request:" : "Your apology:";
    const input = document.createElement("textarea");
    input.id = "modal-text";
    input.maxLength = 1000;
    const submit = document.createElement("button");
    submit.id = "modal-submit";
    submit.textContent = "Submit";
    submit.addEventListener("click", () => {
      void this.submitAction(this.modalAction!, input.value);
    });
    const cancel = document.createElement("button");
    cancel.textContent = "Cancel";
    cancel.addEventListener("click", () => {
      this.modalAction = null;
      this.render();
    });
    box.append(label, input, submit, cancel);
    host.appendChild(box);
  }
}
