/** Pure session state reducer for the UI.
 *
 * Consumes stream frames in arrival order and maintains everything the
 * renderer needs: the latest step frame, a bounded trace of past poses, the
 * offset history for the sparkline, and explicit markers for gaps and
 * resumes so dropped frames are visible rather than silently smoothed over.
 */
import { GapFrame, Metrics, StepFrame, StreamFrame } from "./types.js";

export interface TracePoint {
    step: number;
    p1: number;
    p2: number;
    theta: number;
}

export interface OffsetSample {
    step: number;
    t: number;
    d: number;
    violation: boolean;
}

const TRACE_LIMIT = 2000;

export class SessionViewModel {
    latest: StepFrame | null = null;
    trace: TracePoint[] = [];
    offsets: OffsetSample[] = [];
    gaps: GapFrame[] = [];
    resumedAt: number | null = null;
    outOfOrder = 0;
    framesSeen = 0;

    apply(frame: StreamFrame): void {
        switch (frame.type) {
            case "resume":
                this.resumedAt = frame.at_step;
                return;
            case "gap":
                this.gaps.push(frame);
                return;
            case "step":
                break;
        }
        this.framesSeen += 1;
        if (this.latest !== null && frame.step <= this.latest.step) {
            // stale frame after a reset or replay: start a fresh trace
            if (frame.step < this.latest.step) {
                this.outOfOrder += 1;
            }
            this.trace = [];
            this.offsets = [];
        }
        this.latest = frame;
        this.trace.push({
            step: frame.step,
            p1: frame.pose.p1,
            p2: frame.pose.p2,
            theta: frame.pose.theta,
        });
        if (this.trace.length > TRACE_LIMIT) {
            this.trace.splice(0, this.trace.length - TRACE_LIMIT);
        }
        this.offsets.push({
            step: frame.step,
            t: frame.t,
            d: frame.reduced.d * (frame.mirrored ? -1 : 1),
            violation: frame.violation,
        });
        if (this.offsets.length > TRACE_LIMIT) {
            this.offsets.splice(0, this.offsets.length - TRACE_LIMIT);
        }
    }

    get metrics(): Metrics | null {
        return this.latest?.metrics ?? null;
    }

    get step(): number {
        return this.latest?.step ?? -1;
    }

    /** Steps known to be missing from the local history. */
    get droppedSteps(): number {
        return this.gaps.reduce(
            (sum, g) => sum + (g.resumed_at - g.dropped_from), 0);
    }

    reset(): void {
        this.latest = null;
        this.trace = [];
        this.offsets = [];
        this.gaps = [];
        this.resumedAt = null;
        this.outOfOrder = 0;
        this.framesSeen = 0;
    }
}
