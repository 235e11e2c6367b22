/** Wire types of the simulation service.
 *
 * Frames arrive as JSON text over the session websocket; every shape here
 * mirrors the server's serializer field for field.
 */

export interface Pose {
    p1: number;
    p2: number;
    theta: number;
    v_y: number;
    r: number;
}

export interface ReducedState {
    v_y: number;
    r: number;
    xi: number;
    d: number;
    kappa: number;
}

export interface Metrics {
    accumulated_abs_distance: number;
    accumulated_sq_distance: number;
    max_abs_distance: number;
    progress: number;
    lap_time: number | null;
    violations: number;
}

export interface StepFrame {
    type: "step";
    step: number;
    t: number;
    pose: Pose;
    reduced: ReducedState;
    mirrored: boolean;
    control: number[];
    applied: number[];
    objectives: number[];
    front: number[][];
    rho: number[];
    z: number[];
    violation: boolean;
    warnings: string[];
    progress: number;
    metrics: Metrics;
}

/** Sent once on (re)connect when the session already has history. */
export interface ResumeFrame {
    type: "resume";
    at_step: number;
}

/** Marks dropped frames: the stream continues at resumed_at. */
export interface GapFrame {
    type: "gap";
    dropped_from: number;
    resumed_at: number;
}

export type StreamFrame = StepFrame | ResumeFrame | GapFrame;

export interface SessionState {
    id: string;
    method: string;
    track: string;
    status: "idle" | "running" | "paused";
    step: number;
    rho: number[];
    z: number[];
    metrics: Metrics;
    seed: number | null;
    last_frame: StepFrame | null;
    events: { step: number; type: string; value: number[] }[];
}

export interface TrackSummary {
    id: string;
    length: number;
    closed: boolean;
    d_max: number;
    n_points: number;
}

export interface TrackDetail {
    id: string;
    closed: boolean;
    d_max: number;
    length: number;
    points: [number, number][];
}

function isNumberArray(x: unknown): x is number[] {
    return Array.isArray(x) && x.every((v) => typeof v === "number");
}

/** Parse one websocket message; throws on anything malformed. */
export function parseFrame(text: string): StreamFrame {
    const raw: unknown = JSON.parse(text);
    if (typeof raw !== "object" || raw === null) {
        throw new Error("frame is not an object");
    }
    const frame = raw as Record<string, unknown>;
    switch (frame.type) {
        case "resume":
            if (typeof frame.at_step !== "number") {
                throw new Error("resume frame without at_step");
            }
            return frame as unknown as ResumeFrame;
        case "gap":
            if (typeof frame.dropped_from !== "number"
                || typeof frame.resumed_at !== "number") {
                throw new Error("gap frame without bounds");
            }
            return frame as unknown as GapFrame;
        case "step": {
            if (typeof frame.step !== "number" || typeof frame.t !== "number") {
                throw new Error("step frame without step/t");
            }
            if (!isNumberArray(frame.control) || !isNumberArray(frame.rho)
                || !isNumberArray(frame.z)
                || !isNumberArray(frame.objectives)) {
                throw new Error("step frame with malformed arrays");
            }
            if (typeof frame.pose !== "object" || frame.pose === null
                || typeof frame.reduced !== "object"
                || frame.reduced === null) {
                throw new Error("step frame without pose/reduced");
            }
            return frame as unknown as StepFrame;
        }
        default:
            throw new Error(`unknown frame type ${String(frame.type)}`);
    }
}
