import { ApiClient } from "./api";
import { EditorModel, mountEditor } from "./editor";
import { HeatmapView } from "./heatmap";
import { SessionController } from "./staircase";
import { StreamClient } from "./stream";
import type { ConnectionStatus, SessionConfigDoc } from "./types";

const api = new ApiClient("");
const streamUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/stream`;
const stream = new StreamClient(streamUrl);
const controller = new SessionController(api);
controller.attach(stream);

const app = document.getElementById("app")!;

function banner(status: ConnectionStatus): string {
  if (status === "live") return "";
  if (status === "stale") return "STALE DATA - no telemetry from the device service";
  if (status === "connecting") return "connecting…";
  return "disconnected";
}

function mountStatusBanner(root: HTMLElement): void {
  const el = document.createElement("div");
  el.className = "status-banner";
  root.appendChild(el);
  const render = (status: ConnectionStatus) => {
    el.textContent = banner(status);
    el.classList.toggle("bad", status !== "live");
  };
  render(stream.currentStatus());
  stream.onStatus(render);
}

function mountOperator(root: HTMLElement): void {
  root.innerHTML = `
    <h1>device console — operator</h1>
    <div class="columns">
      <section>
        <h2>live array</h2>
        <div class="pane heatmap-pane"></div>
      </section>
      <section>
        <h2>session</h2>
        <div class="pane session-pane">
          <form class="config-form">
            <label>participant <input name="participant_id" value="anon"></label>
            <label>seed <input name="seed" type="number" value="0"></label>
            <label>reversals <input name="reversals_to_stop" type="number" value="10"></label>
            <label>stimulus s <input name="stimulus_duration_s" type="number" step="0.1" value="3.5"></label>
            <fieldset class="conditions">
              <legend>conditions</legend>
              <label><input type="checkbox" value="warm:line" checked> warm line</label>
              <label><input type="checkbox" value="warm:all" checked> warm all</label>
              <label><input type="checkbox" value="cool:line" checked> cool line</label>
              <label><input type="checkbox" value="cool:all" checked> cool all</label>
            </fieldset>
            <button type="submit">Start staircase</button>
            <button type="button" class="stop">Stop</button>
          </form>
          <pre class="session-view"></pre>
        </div>
      </section>
      <section>
        <h2>pattern editor</h2>
        <div class="pane editor-pane"></div>
      </section>
    </div>
    <section>
      <h2>events</h2>
      <pre class="pane event-log"></pre>
    </section>
  `;

  const heatmap = new HeatmapView(root.querySelector(".heatmap-pane")!, 30);
  stream.onFrame((frame) => heatmap.update(frame));
  void api.state().then((s) => heatmap.setAmbient(s.ambient_c));

  const editor = new EditorModel();
  mountEditor(root.querySelector(".editor-pane")!, editor, api);

  const form = root.querySelector(".config-form") as HTMLFormElement;
  const sessionView = root.querySelector(".session-view") as HTMLElement;

  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const data = new FormData(form);
    const conditions: [string, string][] = [];
    form.querySelectorAll<HTMLInputElement>(".conditions input:checked").forEach((box) => {
      const [polarity, pattern] = box.value.split(":");
      conditions.push([polarity, pattern]);
    });
    const config: SessionConfigDoc = {
      experiment: "staircase",
      participant_id: String(data.get("participant_id") || "anon"),
      seed: Number(data.get("seed") || 0),
      reversals_to_stop: Number(data.get("reversals_to_stop") || 10),
      stimulus_duration_s: Number(data.get("stimulus_duration_s") || 3.5),
      conditions,
    };
    controller.start(config).catch((err) => {
      sessionView.textContent = `start failed: ${err.message}`;
    });
  });
  (root.querySelector(".stop") as HTMLButtonElement).addEventListener("click", () => {
    controller.stop().catch((err) => {
      sessionView.textContent = `stop failed: ${err.message}`;
    });
  });

  controller.onChange((state) => {
    // Operator sees the full picture, stimulus parameters included.
    sessionView.textContent = JSON.stringify(state, null, 1);
  });

  const log = root.querySelector(".event-log") as HTMLElement;
  stream.onEvent((ev) => {
    if (ev.kind === "tick") return;
    log.textContent = `${ev.t_us} ${ev.kind} ${JSON.stringify(ev.payload)}\n` + log.textContent;
    const lines = log.textContent.split("\n");
    if (lines.length > 40) log.textContent = lines.slice(0, 40).join("\n");
  });

  setInterval(() => {
    void api.state().then((s) => controller.syncFromState(s)).catch(() => {});
  }, 1000);
}

const LIKERT_ITEMS = ["intensity", "confidence"];

function mountParticipant(root: HTMLElement): void {
  root.innerHTML = `
    <h1>participant</h1>
    <div class="pane participant-pane">
      <div class="trial-banner">waiting for session…</div>
      <div class="choice-row">
        <button class="choice same" disabled>Same</button>
        <button class="choice different" disabled>Different</button>
      </div>
      <div class="likert"></div>
      <div class="reject-reason"></div>
    </div>
  `;
  const bannerEl = root.querySelector(".trial-banner") as HTMLElement;
  const sameBtn = root.querySelector(".same") as HTMLButtonElement;
  const diffBtn = root.querySelector(".different") as HTMLButtonElement;
  const reject = root.querySelector(".reject-reason") as HTMLElement;

  const likertBox = root.querySelector(".likert") as HTMLElement;
  const scales = new Map<string, HTMLInputElement>();
  for (const item of LIKERT_ITEMS) {
    const row = document.createElement("label");
    row.className = "likert-row";
    row.textContent = `${item} (1-7) `;
    const input = document.createElement("input");
    input.type = "range";
    input.min = "1";
    input.max = "7";
    input.value = "4";
    row.appendChild(input);
    likertBox.appendChild(row);
    scales.set(item, input);
  }

  const press = (choice: "same" | "different") => {
    const questionnaire: Record<string, number> = {};
    scales.forEach((input, item) => {
      questionnaire[item] = Number(input.value);
    });
    void controller.respond(choice, { questionnaire });
  };
  sameBtn.addEventListener("click", () => press("same"));
  diffBtn.addEventListener("click", () => press("different"));

  controller.onChange(() => {
    const view = controller.participantView();
    sameBtn.disabled = !view.responseEnabled;
    diffBtn.disabled = !view.responseEnabled;
    reject.textContent = view.lastRejection ?? "";
    if (view.finished) {
      bannerEl.textContent = "session complete — thank you";
    } else if (!view.sessionActive) {
      bannerEl.textContent = "waiting for session…";
    } else if (view.responseEnabled) {
      bannerEl.textContent = `trial ${view.trialNumber}: same or different?`;
    } else {
      bannerEl.textContent = `trial ${view.trialNumber ?? "-"}: attend to the stimulus`;
    }
  });

  setInterval(() => {
    void api.state().then((s) => controller.syncFromState(s)).catch(() => {});
  }, 1000);
}

function route(): void {
  app.innerHTML = "";
  mountStatusBanner(app);
  const view = document.createElement("div");
  app.appendChild(view);
  if (location.hash === "#/participant") {
    mountParticipant(view);
  } else {
    mountOperator(view);
  }
}

window.addEventListener("hashchange", route);
route();
stream.connect();
