// Viewport state and its pure transitions. Everything here is rebuildable
// from server responses (load + /nodes + /status), which is what makes the
// UI refresh-safe: no edit state lives only in the DOM.

import { Vec3 } from "./camera";

export interface DragState {
    nodeId: number;
    startScreen: [number, number];
    lastScreen: [number, number];
    startWorld: Vec3;
    depth: number;
    depthAxis: boolean; // modifier held: drag along the view direction
}

export interface ViewportState {
    t: number;
    nodeCount: number;
    selected: number[]; // pinned handles, in selection order
    drag: DragState | null;
}

export function initialState(): ViewportState {
    return { t: 0, nodeCount: 0, selected: [], drag: null };
}

export function clamp01(x: number): number {
    if (!Number.isFinite(x)) return 0;
    return Math.min(1, Math.max(0, x));
}

export function setTime(s: ViewportState, t: number): ViewportState {
    return { ...s, t: clamp01(t) };
}

export function setNodeCount(s: ViewportState, n: number): ViewportState {
    // dropping stale ids keeps selected a subset of the known nodes
    return {
        ...s,
        nodeCount: n,
        selected: s.selected.filter((i) => i >= 0 && i < n),
        drag: s.drag && s.drag.nodeId < n ? s.drag : null,
    };
}

export function toggleSelect(s: ViewportState, id: number): ViewportState {
    if (id < 0 || id >= s.nodeCount) return s;
    const selected = s.selected.includes(id)
        ? s.selected.filter((i) => i !== id)
        : [...s.selected, id];
    return { ...s, selected };
}

export function beginDrag(s: ViewportState, drag: DragState): ViewportState {
    if (drag.nodeId < 0 || drag.nodeId >= s.nodeCount) return s;
    const selected = s.selected.includes(drag.nodeId)
        ? s.selected
        : [...s.selected, drag.nodeId];
    return { ...s, selected, drag };
}

export function moveDrag(s: ViewportState, screen: [number, number]): ViewportState {
    if (!s.drag) return s;
    return { ...s, drag: { ...s.drag, lastScreen: screen } };
}

export function endDrag(s: ViewportState): ViewportState {
    return { ...s, drag: null };
}

export function escapeEdit(s: ViewportState): ViewportState {
    return { ...s, selected: [], drag: null };
}
