/** Canvas rendering: track, corridor, vehicle trace and objective front. */
import { StepFrame } from "./types.js";
import { SessionViewModel } from "./viewmodel.js";

export interface Viewport {
    scale: number;
    offsetX: number;
    offsetY: number;
}

/** Fit a point cloud into a canvas with a margin; y grows upward. */
export function fitViewport(
    points: [number, number][],
    width: number,
    height: number,
    margin = 30,
): Viewport {
    let minX = Infinity, maxX = -Infinity, minY = Infinity, maxY = -Infinity;
    for (const [x, y] of points) {
        minX = Math.min(minX, x);
        maxX = Math.max(maxX, x);
        minY = Math.min(minY, y);
        maxY = Math.max(maxY, y);
    }
    const spanX = Math.max(maxX - minX, 1e-9);
    const spanY = Math.max(maxY - minY, 1e-9);
    const scale = Math.min((width - 2 * margin) / spanX,
        (height - 2 * margin) / spanY);
    return {
        scale,
        offsetX: margin - minX * scale + (width - 2 * margin - spanX * scale) / 2,
        offsetY: height - margin + minY * scale
            - (height - 2 * margin - spanY * scale) / 2,
    };
}

export function toCanvas(view: Viewport, x: number, y: number): [number, number] {
    return [x * view.scale + view.offsetX, view.offsetY - y * view.scale];
}

export class TrackRenderer {
    private view: Viewport | null = null;

    constructor(
        private canvas: HTMLCanvasElement,
        private track: [number, number][],
        private dMax: number,
    ) {}

    draw(model: SessionViewModel): void {
        const ctx = this.canvas.getContext("2d");
        if (!ctx) return;
        const { width, height } = this.canvas;
        if (!this.view) {
            this.view = fitViewport(this.track, width, height);
        }
        ctx.clearRect(0, 0, width, height);

        ctx.lineWidth = Math.max(1, 2 * this.dMax * this.view.scale);
        ctx.strokeStyle = "#e8eef5";
        ctx.lineCap = "round";
        this.polyline(ctx, this.track);

        ctx.lineWidth = 1.5;
        ctx.strokeStyle = "#8aa2b8";
        ctx.setLineDash([6, 6]);
        this.polyline(ctx, this.track);
        ctx.setLineDash([]);

        if (model.trace.length > 1) {
            ctx.lineWidth = 2;
            ctx.strokeStyle = "#d9534f";
            this.polyline(ctx, model.trace.map((p) => [p.p1, p.p2]));
        }
        if (model.latest) {
            this.drawVehicle(ctx, model.latest);
        }
    }

    private polyline(ctx: CanvasRenderingContext2D, pts: [number, number][]) {
        if (!this.view || pts.length < 2) return;
        ctx.beginPath();
        const [x0, y0] = toCanvas(this.view, pts[0][0], pts[0][1]);
        ctx.moveTo(x0, y0);
        for (const [x, y] of pts.slice(1)) {
            const [cx, cy] = toCanvas(this.view, x, y);
            ctx.lineTo(cx, cy);
        }
        ctx.stroke();
    }

    private drawVehicle(ctx: CanvasRenderingContext2D, frame: StepFrame) {
        if (!this.view) return;
        const [cx, cy] = toCanvas(this.view, frame.pose.p1, frame.pose.p2);
        const size = Math.max(6, 2.5 * this.view.scale);
        ctx.save();
        ctx.translate(cx, cy);
        ctx.rotate(-frame.pose.theta);
        ctx.fillStyle = frame.violation ? "#c9302c" : "#2c6fbb";
        ctx.beginPath();
        ctx.moveTo(size, 0);
        ctx.lineTo(-size * 0.6, size * 0.45);
        ctx.lineTo(-size * 0.6, -size * 0.45);
        ctx.closePath();
        ctx.fill();
        ctx.restore();
    }
}

/** Scatter of the candidate worst-case front with the reference point. */
export class FrontRenderer {
    constructor(private canvas: HTMLCanvasElement) {}

    draw(frame: StepFrame | null): void {
        const ctx = this.canvas.getContext("2d");
        if (!ctx) return;
        const { width, height } = this.canvas;
        ctx.clearRect(0, 0, width, height);
        if (!frame || frame.front.length === 0) return;

        const pts: [number, number][] = frame.front.map(
            (row) => [row[0], row[1]]);
        pts.push([frame.z[0], frame.z[1]]);
        pts.push([frame.objectives[0], frame.objectives[1]]);
        const view = fitViewport(pts, width, height, 18);

        ctx.fillStyle = "#8aa2b8";
        for (const row of frame.front) {
            const [x, y] = toCanvas(view, row[0], row[1]);
            ctx.beginPath();
            ctx.arc(x, y, 3, 0, 2 * Math.PI);
            ctx.fill();
        }
        const [zx, zy] = toCanvas(view, frame.z[0], frame.z[1]);
        ctx.strokeStyle = "#5cb85c";
        ctx.lineWidth = 2;
        ctx.strokeRect(zx - 4, zy - 4, 8, 8);

        const [ox, oy] = toCanvas(view, frame.objectives[0], frame.objectives[1]);
        ctx.fillStyle = "#d9534f";
        ctx.beginPath();
        ctx.arc(ox, oy, 4, 0, 2 * Math.PI);
        ctx.fill();
    }
}

/** Offset history sparkline with the corridor bounds. */
export function drawOffsets(
    canvas: HTMLCanvasElement,
    model: SessionViewModel,
    dMax: number,
): void {
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    const { width, height } = canvas;
    ctx.clearRect(0, 0, width, height);
    const samples = model.offsets;
    if (samples.length < 2) return;

    const span = Math.max(dMax, ...samples.map((s) => Math.abs(s.d))) * 1.1;
    const y = (d: number) => height / 2 - (d / span) * (height / 2);
    const x = (i: number) => (i / (samples.length - 1)) * width;

    ctx.strokeStyle = "#e0b4b4";
    ctx.setLineDash([4, 4]);
    for (const bound of [-dMax, dMax]) {
        ctx.beginPath();
        ctx.moveTo(0, y(bound));
        ctx.lineTo(width, y(bound));
        ctx.stroke();
    }
    ctx.setLineDash([]);

    ctx.strokeStyle = "#2c6fbb";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ctx.moveTo(x(0), y(samples[0].d));
    samples.forEach((s, i) => ctx.lineTo(x(i), y(s.d)));
    ctx.stroke();
}
