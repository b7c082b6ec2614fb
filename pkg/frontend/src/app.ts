// Session controller: one in-flight request, server as the only source
// of truth. A page reload rebuilds the identical view from /state and
// the next-pair endpoint.

import { Api, isPair, PairPayload, Panel, StaleError } from "./api.js";
import { renderGlyph } from "./glyph.js";

const POLL_MS = 700;

export class AnnotatorApp {
  private sessionId = "";
  private current: PairPayload | null = null;
  private busy = false;
  private pollTimer: ReturnType<typeof setTimeout> | null = null;

  private onKey = (ev: KeyboardEvent): void => {
    if (ev.key === "s" || ev.key === "S") void this.submit(1);
    if (ev.key === "d" || ev.key === "D") void this.submit(0);
  };

  constructor(private root: HTMLElement, private api: Api) {
    this.root.innerHTML = TEMPLATE;
    this.el("btn-same").addEventListener("click", () => this.submit(1));
    this.el("btn-diff").addEventListener("click", () => this.submit(0));
    document.addEventListener("keydown", this.onKey);
  }

  async start(): Promise<void> {
    try {
      const opened = await this.api.openSession();
      this.sessionId = opened.session_id;
      await this.refreshState();
      await this.fetchNext();
    } catch (err) {
      this.showRetry(() => this.start());
    }
  }

  async fetchNext(): Promise<void> {
    this.setButtonsEnabled(false);
    this.current = null;
    let response;
    try {
      response = await this.api.nextPair(this.sessionId);
    } catch (err) {
      this.showRetry(() => this.fetchNext());
      return;
    }
    this.hideRetry();
    if (isPair(response)) {
      this.current = response;
      this.renderPair(response);
      this.setButtonsEnabled(true);
      return;
    }
    if (response.phase === "training") {
      this.el("phase").textContent = "engine is training / re-clustering…";
      this.el("phase").hidden = false;
      this.pollTimer = setTimeout(() => this.fetchNext(), POLL_MS);
      return;
    }
    await this.renderSummary();
  }

  async submit(v: 0 | 1): Promise<void> {
    if (!this.current || this.busy) return;
    const pair = this.current;
    this.busy = true;
    this.setButtonsEnabled(false);
    try {
      await this.api.submitVerdict(this.sessionId, pair.pair_id, v);
      await this.refreshState();
      await this.fetchNext();
    } catch (err) {
      if (err instanceof StaleError) {
        this.toast("question skipped (state moved on)");
        await this.refreshState();
        await this.fetchNext();
      } else {
        this.showRetry(() => {
          this.busy = false;
          this.current = pair;
          this.setButtonsEnabled(true);
        });
      }
    } finally {
      this.busy = false;
    }
  }

  private renderPair(pair: PairPayload): void {
    this.el("phase").hidden = true;
    this.el("summary").hidden = true;
    this.el("pair-view").hidden = false;
    const badge = this.el("stage-badge");
    badge.textContent = pair.stage.toUpperCase();
    badge.className = `badge badge-${pair.stage}`;
    this.renderPanel("a", pair.a);
    this.renderPanel("b", pair.b);
    this.renderBudget(pair.budget_used, pair.budget_total);
  }

  private renderPanel(which: "a" | "b", panel: Panel): void {
    const box = this.el(`panel-${which}`);
    box.innerHTML = "";
    if (panel.image_ref) {
      const img = document.createElement("img");
      img.src = panel.image_ref;
      img.alt = `sample ${panel.id}`;
      box.appendChild(img);
    } else {
      const canvas = document.createElement("canvas");
      renderGlyph(canvas, panel);
      box.appendChild(canvas);
    }
    const caption = document.createElement("div");
    caption.className = "caption";
    caption.textContent = `sample #${panel.id}`;
    box.appendChild(caption);
  }

  private renderBudget(used: number, total: number): void {
    this.el("budget-text").textContent = `${used} / ${total}`;
    const pct = total > 0 ? Math.min(100, (100 * used) / total) : 0;
    (this.el("budget-fill") as HTMLElement).style.width = `${pct}%`;
  }

  private async refreshState(): Promise<void> {
    try {
      const state = await this.api.state(this.sessionId);
      this.el("cluster-count").textContent = String(state.num_clusters);
      this.el("noise-count").textContent = String(state.num_noise);
      this.el("epoch").textContent = String(state.epoch);
      this.renderBudget(state.budget_used, state.budget_total);
    } catch {
      // widgets refresh on the next successful call
    }
  }

  private async renderSummary(): Promise<void> {
    this.el("pair-view").hidden = true;
    this.el("phase").hidden = true;
    const summary = this.el("summary");
    summary.hidden = false;
    try {
      const state = await this.api.state(this.sessionId);
      const last = state.reports[state.reports.length - 1] ?? {};
      this.el("summary-body").textContent = [
        `budget used: ${state.budget_used} / ${state.budget_total}`,
        `clusters: ${state.num_clusters}`,
        `epochs completed: ${state.reports.length}`,
        last["map"] != null ? `mAP: ${(last["map"] as number).toFixed(4)}` : "",
        last["pairwise_f1"] != null
          ? `pairwise F1: ${(last["pairwise_f1"] as number).toFixed(4)}`
          : "",
      ].filter(Boolean).join("\n");
    } catch {
      this.el("summary-body").textContent = "session finished";
    }
  }

  toast(message: string): void {
    const toast = this.el("toast");
    toast.textContent = message;
    toast.hidden = false;
    setTimeout(() => { toast.hidden = true; }, 2500);
  }

  private showRetry(action: () => void): void {
    const banner = this.el("retry");
    banner.hidden = false;
    this.el("btn-retry").onclick = () => {
      banner.hidden = true;
      action();
    };
  }

  private hideRetry(): void {
    this.el("retry").hidden = true;
  }

  private setButtonsEnabled(enabled: boolean): void {
    (this.el("btn-same") as HTMLButtonElement).disabled = !enabled;
    (this.el("btn-diff") as HTMLButtonElement).disabled = !enabled;
  }

  private el(id: string): HTMLElement {
    const node = this.root.querySelector(`#${id}`);
    if (!node) throw new Error(`missing element #${id}`);
    return node as HTMLElement;
  }

  stop(): void {
    if (this.pollTimer) clearTimeout(this.pollTimer);
    document.removeEventListener("keydown", this.onKey);
  }
}

const TEMPLATE = `
<header class="topbar">
  <span class="brand">pair verification</span>
  <span id="stage-badge" class="badge"></span>
  <div class="budget"><div id="budget-fill"></div></div>
  <span id="budget-text">0 / 0</span>
  <span class="stat">clusters <b id="cluster-count">–</b></span>
  <span class="stat">noise <b id="noise-count">–</b></span>
  <span class="stat">epoch <b id="epoch">–</b></span>
</header>
<div id="toast" hidden></div>
<div id="retry" hidden>
  network hiccup; nothing was lost.
  <button id="btn-retry">retry</button>
</div>
<div id="phase" hidden></div>
<main id="pair-view" hidden>
  <section id="panel-a" class="panel"></section>
  <section id="panel-b" class="panel"></section>
</main>
<footer class="controls">
  <button id="btn-same" disabled>Same (S)</button>
  <button id="btn-diff" disabled>Different (D)</button>
</footer>
<section id="summary" hidden>
  <h2>session complete</h2>
  <pre id="summary-body"></pre>
</section>
`;
