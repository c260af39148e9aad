// Node/edge overlay as pure data: the editor computes a draw list from the
// latest /nodes payload and the current camera, a thin DOM layer rasterizes
// it. Keeping this data-only makes the overlay testable without a canvas.

import { OrbitCamera, Vec3 } from "./camera";

export interface OverlayDot {
    id: number;
    u: number;
    v: number;
    selected: boolean;
    isolated: boolean;
}

export interface OverlaySegment {
    u0: number;
    v0: number;
    u1: number;
    v1: number;
    weight: number;
}

export interface DrawList {
    dots: OverlayDot[];
    segments: OverlaySegment[];
}

export function buildDrawList(
    camera: OrbitCamera,
    positions: number[][],
    edges: [number, number, number][],
    selected: number[],
    isolated: number[],
): DrawList {
    const projected = positions.map((p) => camera.project(p as Vec3));
    const sel = new Set(selected);
    const iso = new Set(isolated);
    const dots: OverlayDot[] = [];
    projected.forEach((pr, id) => {
        if (pr.depth <= 0) return; // behind the camera
        dots.push({ id, u: pr.u, v: pr.v, selected: sel.has(id), isolated: iso.has(id) });
    });
    const segments: OverlaySegment[] = [];
    for (const [i, j, w] of edges) {
        if (i >= j) continue; // draw each undirected edge once
        const a = projected[i];
        const b = projected[j];
        if (!a || !b || a.depth <= 0 || b.depth <= 0) continue;
        segments.push({ u0: a.u, v0: a.v, u1: b.u, v1: b.v, weight: w });
    }
    return { dots, segments };
}

// Nearest visible dot within pickRadius pixels, or null.
export function hitTest(
    draw: DrawList,
    u: number,
    v: number,
    pickRadius = 8,
): OverlayDot | null {
    let best: OverlayDot | null = null;
    let bestD2 = pickRadius * pickRadius;
    for (const dot of draw.dots) {
        const d2 = (dot.u - u) ** 2 + (dot.v - v) ** 2;
        if (d2 <= bestD2) {
            best = dot;
            bestD2 = d2;
        }
    }
    return best;
}
