/** UI wiring: session lifecycle, live steering controls and rendering. */
import { ServiceClient } from "./client.js";
import { FrontRenderer, TrackRenderer, drawOffsets } from "./render.js";
import { SessionViewModel } from "./viewmodel.js";

function el<T extends HTMLElement>(id: string): T {
    const node = document.getElementById(id);
    if (!node) throw new Error(`missing element #${id}`);
    return node as T;
}

async function boot(): Promise<void> {
    const client = new ServiceClient("");
    const model = new SessionViewModel();

    const methodSelect = el<HTMLSelectElement>("method");
    const trackSelect = el<HTMLSelectElement>("track");
    const rhoSlider = el<HTMLInputElement>("rho");
    const rhoLabel = el<HTMLSpanElement>("rho-label");
    const z1Input = el<HTMLInputElement>("z1");
    const z2Input = el<HTMLInputElement>("z2");
    const statusLine = el<HTMLDivElement>("status");
    const metricsLine = el<HTMLDivElement>("metrics");

    const tracks = await client.tracks();
    for (const track of tracks) {
        const option = document.createElement("option");
        option.value = track.id;
        option.textContent = `${track.id} (${track.length.toFixed(0)} m)`;
        trackSelect.appendChild(option);
    }

    let sessionId: string | null = null;
    let closeStream: (() => void) | null = null;
    let trackRenderer: TrackRenderer | null = null;
    const frontRenderer = new FrontRenderer(el<HTMLCanvasElement>("front"));

    const redraw = () => {
        trackRenderer?.draw(model);
        frontRenderer.draw(model.latest);
        drawOffsets(el<HTMLCanvasElement>("offsets"), model, 10);
        const m = model.metrics;
        if (model.latest && m) {
            statusLine.textContent =
                `step ${model.latest.step}  t=${model.latest.t.toFixed(2)}s`
                + (model.droppedSteps > 0
                    ? `  (${model.droppedSteps} frames dropped)` : "");
            metricsLine.textContent =
                `acc|d| ${m.accumulated_abs_distance.toFixed(2)}  `
                + `max|d| ${m.max_abs_distance.toFixed(2)}  `
                + `violations ${m.violations}`
                + (m.lap_time !== null
                    ? `  lap ${m.lap_time.toFixed(2)}s` : "");
        }
    };

    el<HTMLButtonElement>("start").onclick = async () => {
        closeStream?.();
        model.reset();
        const trackId = trackSelect.value || "default";
        const detail = await client.trackDetail(trackId);
        trackRenderer = new TrackRenderer(
            el<HTMLCanvasElement>("map"), detail.points, detail.d_max);
        const created = await client.createSession({
            method: methodSelect.value,
            track: trackId,
            seed: 0,
            z: [Number(z1Input.value), Number(z2Input.value)],
        });
        sessionId = created.id;
        closeStream = client.openStream(sessionId, (frame) => {
            model.apply(frame);
            redraw();
        }, (err) => { statusLine.textContent = String(err); });
        await client.run(sessionId);
    };

    el<HTMLButtonElement>("pause").onclick = async () => {
        if (sessionId) await client.pause(sessionId);
    };
    el<HTMLButtonElement>("resume").onclick = async () => {
        if (sessionId) await client.run(sessionId);
    };
    el<HTMLButtonElement>("reset-btn").onclick = async () => {
        if (!sessionId) return;
        await client.reset(sessionId);
        model.reset();
        redraw();
    };

    rhoSlider.oninput = () => {
        rhoLabel.textContent = Number(rhoSlider.value).toFixed(2);
    };
    rhoSlider.onchange = async () => {
        if (sessionId) {
            await client.setPreference(sessionId, Number(rhoSlider.value));
        }
    };
    const pushReference = async () => {
        if (sessionId) {
            await client.setReference(
                sessionId, Number(z1Input.value), Number(z2Input.value));
        }
    };
    z1Input.onchange = pushReference;
    z2Input.onchange = pushReference;
}

boot().catch((err) => {
    const status = document.getElementById("status");
    if (status) status.textContent = `failed to start: ${err}`;
});
