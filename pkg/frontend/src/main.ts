/** DOM bootstrap: canvas, telemetry panel, socket wiring. */

import { SessionClient, type SocketLike } from "./client.js";
import { InputMapper } from "./controls.js";
import { renderFrame, TrajectoryTrace } from "./render.js";
import { SceneModel } from "./scene.js";
import { TelemetryStore, type RingSeries } from "./telemetry.js";
import type { SceneInitMessage, StateMessage } from "./protocol.js";

const STEP_SECONDS = 0.1;

function wsUrl(): string {
  const params = new URLSearchParams(location.search);
  const host = params.get("host") ?? location.hostname ?? "127.0.0.1";
  const port = params.get("port") ?? "8765";
  return `ws://${host}:${port}`;
}

function sparkline(canvas: HTMLCanvasElement, series: RingSeries, color: string): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const values = series.snapshot();
  if (values.length < 2) return;
  const [lo, hi] = series.range();
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.25;
  ctx.beginPath();
  values.forEach((v, i) => {
    const x = (i / (values.length - 1)) * canvas.width;
    const y = canvas.height - ((v - lo) / (hi - lo)) * (canvas.height - 4) - 2;
    if (i === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
}

function main(): void {
  const canvas = document.getElementById("view") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  const statusLine = document.getElementById("status")!;
  const latencyLine = document.getElementById("latency")!;
  const errorLine = document.getElementById("errors")!;
  const outcomesLine = document.getElementById("outcomes")!;
  const chartsBox = document.getElementById("charts")!;

  let scene: SceneModel | null = null;
  let lastState: StateMessage | null = null;
  const trace = new TrajectoryTrace();
  const telemetry = new TelemetryStore();
  let lastEpisode = -1;

  const charts: Record<string, HTMLCanvasElement> = {};
  for (const name of ["j_q1", "j_pi", "j_ae", "alpha", "psr_so_far", "rl_size", "human_size", "regions"]) {
    const label = document.createElement("div");
    label.textContent = name;
    label.className = "chart-label";
    const c = document.createElement("canvas");
    c.width = 220;
    c.height = 48;
    chartsBox.appendChild(label);
    chartsBox.appendChild(c);
    charts[name] = c;
  }

  const client = new SessionClient(
    () => new WebSocket(wsUrl()) as unknown as SocketLike,
    {
      onSceneInit(msg) {
        scene = new SceneModel(msg as SceneInitMessage);
        trace.clear();
      },
      onState(msg) {
        if (msg.episode !== lastEpisode) {
          trace.clear();
          lastEpisode = msg.episode;
        }
        if (msg.phase === "correcting" && lastState?.phase !== "correcting") {
          mapper.correctionStarted();
        }
        lastState = msg;
        trace.push(msg);
        telemetry.onState(msg);
      },
      onMetrics(msg) {
        telemetry.onMetrics(msg as never);
      },
      onError(detail) {
        errorLine.textContent = `server: ${detail}`;
      },
      onConnectionChange(up) {
        statusLine.textContent = up ? "connected" : "reconnecting…";
      },
    },
  );
  const mapper = new InputMapper(client.machine, (msg) => client.send(msg), STEP_SECONDS);
  client.connect();

  canvas.addEventListener("mousemove", (e) => {
    const rect = canvas.getBoundingClientRect();
    mapper.pointerSteer(((e.clientX - rect.left) / rect.width) * 2 - 1);
  });
  canvas.addEventListener("wheel", (e) => {
    e.preventDefault();
    mapper.speedMagnitude(mapper.state.magnitude - Math.sign(e.deltaY) * 0.1);
  });
  window.addEventListener("keydown", (e) => mapper.keyDown(e.key));
  window.addEventListener("keyup", (e) => mapper.keyUp(e.key));

  function frame(): void {
    const stale = client.staleness();
    const staleLimit = 2 * STEP_SECONDS;
    if (scene && lastState) {
      const view = scene.viewport(canvas.width, canvas.height);
      renderFrame(ctx as never, scene, view, lastState, trace);
    }
    latencyLine.textContent = `latency ${Math.max(0, stale * 1000).toFixed(0)} ms`;
    latencyLine.className = stale > staleLimit ? "bad" : "ok";
    if (stale > staleLimit) mapper.disengage();
    if (lastState) {
      statusLine.textContent =
        `ep ${lastState.episode} step ${lastState.step} ` +
        `phase=${lastState.phase} mode=${lastState.mode}` +
        (lastState.status ? ` status=${lastState.status}` : "");
    }
    const total = telemetry.totalOutcomes();
    outcomesLine.textContent = total
      ? Object.entries(telemetry.outcomes)
          .map(([k, v]) => `${k} ${(100 * v / total).toFixed(0)}%`)
          .join("  ")
      : "no finished episodes yet";
    for (const [name, c] of Object.entries(charts)) {
      sparkline(c, telemetry.series[name], "#7fb3ff");
    }
    mapper.tick();
    requestAnimationFrame(frame);
  }
  requestAnimationFrame(frame);
}

window.addEventListener("load", main);
