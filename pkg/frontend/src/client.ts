/** Thin HTTP/WebSocket client for the simulation service.
 *
 * All mutations go through the documented endpoints; steering payloads are
 * validated client-side (preferencePayload / referencePayload) so a slider
 * glitch never produces a 422 round trip.
 */
import {
    SessionState,
    StreamFrame,
    TrackDetail,
    TrackSummary,
    parseFrame,
} from "./types.js";

export interface SessionOptions {
    method?: string;
    track?: string;
    seed?: number;
    rho?: number[];
    z?: number[];
    rpmBudget?: number;
}

/** Build a PUT /preference body; weights are normalized and clamped. */
export function preferencePayload(rho1: number): { rho: number[] } {
    if (!Number.isFinite(rho1)) {
        throw new Error("preference weight must be finite");
    }
    const w = Math.min(1, Math.max(0, rho1));
    return { rho: [w, 1 - w] };
}

/** Build a PUT /reference body; both coordinates must be finite. */
export function referencePayload(z1: number, z2: number): { z: number[] } {
    if (!Number.isFinite(z1) || !Number.isFinite(z2)) {
        throw new Error("reference coordinates must be finite");
    }
    return { z: [z1, z2] };
}

export class ServiceError extends Error {
    constructor(public status: number, detail: string) {
        super(`service error ${status}: ${detail}`);
    }
}

type FetchLike = typeof fetch;

export class ServiceClient {
    constructor(
        private baseUrl: string = "",
        private fetchImpl: FetchLike = fetch,
    ) {}

    private async request<T>(path: string, init?: RequestInit): Promise<T> {
        const response = await this.fetchImpl(this.baseUrl + path, init);
        const body = await response.json();
        if (!response.ok) {
            throw new ServiceError(response.status,
                String((body as { detail?: string }).detail ?? "unknown"));
        }
        return body as T;
    }

    private post<T>(path: string, body: unknown): Promise<T> {
        return this.request<T>(path, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify(body),
        });
    }

    private put<T>(path: string, body: unknown): Promise<T> {
        return this.request<T>(path, {
            method: "PUT",
            headers: { "content-type": "application/json" },
            body: JSON.stringify(body),
        });
    }

    createSession(options: SessionOptions): Promise<{ id: string }> {
        const config: Record<string, unknown> = {};
        if (options.seed !== undefined) config.seed = options.seed;
        if (options.rho !== undefined) config.rho = options.rho;
        if (options.z !== undefined) config.z = options.z;
        if (options.rpmBudget !== undefined) config.rpm_budget = options.rpmBudget;
        return this.post("/sessions", {
            method: options.method ?? "hybrid",
            track: options.track ?? "default",
            config,
        });
    }

    run(id: string, steps?: number): Promise<SessionState> {
        return this.post(`/sessions/${id}/control`,
            steps === undefined ? { action: "run" }
                : { action: "run", steps });
    }

    pause(id: string): Promise<SessionState> {
        return this.post(`/sessions/${id}/control`, { action: "pause" });
    }

    reset(id: string): Promise<SessionState> {
        return this.post(`/sessions/${id}/control`, { action: "reset" });
    }

    setPreference(id: string, rho1: number): Promise<SessionState> {
        return this.put(`/sessions/${id}/preference`, preferencePayload(rho1));
    }

    setReference(id: string, z1: number, z2: number): Promise<SessionState> {
        return this.put(`/sessions/${id}/reference`, referencePayload(z1, z2));
    }

    session(id: string): Promise<SessionState> {
        return this.request(`/sessions/${id}`);
    }

    tracks(): Promise<TrackSummary[]> {
        return this.request("/tracks");
    }

    trackDetail(id: string): Promise<TrackDetail> {
        return this.request(`/tracks/${id}`);
    }

    /** Open the frame stream; reconnects with exponential backoff. */
    openStream(
        id: string,
        onFrame: (frame: StreamFrame) => void,
        onError: (err: Error) => void = () => {},
    ): () => void {
        let socket: WebSocket | null = null;
        let closed = false;
        let attempts = 0;

        const wsBase = this.baseUrl.replace(/^http/, "ws")
            || `ws://${location.host}`;

        const connect = () => {
            socket = new WebSocket(`${wsBase}/sessions/${id}/stream`);
            socket.onopen = () => { attempts = 0; };
            socket.onmessage = (event) => {
                try {
                    onFrame(parseFrame(String(event.data)));
                } catch (err) {
                    onError(err as Error);
                }
            };
            socket.onclose = () => {
                if (closed) return;
                const delay = Math.min(500 * 2 ** attempts, 10000);
                attempts += 1;
                setTimeout(connect, delay);
            };
        };
        connect();

        return () => {
            closed = true;
            socket?.close();
        };
    }
}
