// The editor loop: one object owning the camera, the viewport state, the
// node cache, and the two request channels (render, solve). The DOM layer
// forwards pointer/key/scrub events here and receives frames, overlay draw
// lists, and status through callbacks.

import { ApiClient, NodeData, RenderResult, SolveResult } from "./api";
import { OrbitCamera, Vec3, add } from "./camera";
import { DrawList, buildDrawList, hitTest } from "./overlay";
import { Backoff, LatestWins } from "./scheduler";
import {
    ViewportState,
    beginDrag,
    endDrag,
    escapeEdit,
    initialState,
    moveDrag,
    setNodeCount,
    setTime,
    toggleSelect,
} from "./state";

export interface EditorCallbacks {
    onFrame?(frame: RenderResult): void;
    onOverlay?(draw: DrawList): void;
    onBanner?(visible: boolean): void;
    onToast?(message: string): void;
    onSolve?(energy: number, iters: number): void;
}

interface SolveWork {
    ids: number[];
    targets: number[][];
}

export class Editor {
    state: ViewportState = initialState();
    camera = new OrbitCamera();
    nodes: NodeData | null = null;
    // rest-frame handle anchors: node id -> position sent while pinned
    anchors = new Map<number, Vec3>();
    dragTarget: Vec3 | null = null;
    editActive = false;
    solvedPositions: number[][] | null = null;
    backoff = new Backoff();

    private renderChan: LatestWins<void, RenderResult>;
    private solveChan: LatestWins<SolveWork, SolveResult>;
    private lastSeq = -1;
    private retryTimer: ReturnType<typeof setTimeout> | null = null;

    constructor(
        public api: ApiClient,
        private cb: EditorCallbacks = {},
        private scheduleRetry: (fn: () => void, ms: number) => void = (fn, ms) => {
            this.retryTimer = setTimeout(fn, ms);
        },
    ) {
        this.renderChan = new LatestWins(
            () => this.api.render(this.renderParams()),
            (frame) => {
                this.backoff.reset();
                this.cb.onBanner?.(false);
                this.cb.onFrame?.(frame);
            },
            (err) => this.renderFailed(err),
        );
        this.solveChan = new LatestWins(
            (work: SolveWork) => this.api.setHandles(work.ids, work.targets),
            (result) => this.applySolve(result),
            (err) => this.cb.onToast?.(String(err instanceof Error ? err.message : err)),
        );
    }

    async init(scenePath: string): Promise<void> {
        const info = await this.api.load(scenePath);
        if (info.warning) this.cb.onToast?.(info.warning);
        const mid = info.bbox.min.map((lo, i) => 0.5 * (lo + info.bbox.max[i]));
        this.camera.target = mid as Vec3;
        await this.refreshNodes();
        this.requestFrame();
    }

    renderParams() {
        return {
            t: this.state.t,
            azimuth: this.camera.azimuth,
            elevation: this.camera.elevation,
            radius: this.camera.radius,
            target: this.camera.target,
            width: this.camera.width,
            height: this.camera.height,
            fovX: this.camera.fovX,
        };
    }

    async refreshNodes(): Promise<void> {
        this.nodes = await this.api.nodes(this.state.t);
        this.state = setNodeCount(this.state, this.nodes.positions.length);
        this.publishOverlay();
    }

    // positions the overlay should draw: solved pose while editing, the
    // field-carried pose otherwise
    displayPositions(): number[][] {
        if (this.editActive && this.solvedPositions) return this.solvedPositions;
        return this.nodes ? this.nodes.positions : [];
    }

    publishOverlay(): void {
        if (!this.nodes) return;
        this.cb.onOverlay?.(
            buildDrawList(
                this.camera,
                this.displayPositions(),
                this.nodes.edges,
                this.state.selected,
                this.nodes.isolated,
            ),
        );
    }

    requestFrame(): void {
        this.renderChan.submit();
    }

    private renderFailed(err: unknown): void {
        this.cb.onBanner?.(true);
        const delay = this.backoff.nextDelay();
        this.scheduleRetry(() => this.requestFrame(), delay);
        void err;
    }

    private applySolve(result: SolveResult): void {
        if (result.seq <= this.lastSeq) return; // stale response
        this.lastSeq = result.seq;
        this.solvedPositions = result.positions;
        this.editActive = !result.cleared;
        if (result.warning) this.cb.onToast?.(result.warning);
        this.cb.onSolve?.(result.energy, result.iters);
        this.publishOverlay();
        this.requestFrame();
    }

    // -- user input --------------------------------------------------------

    scrub(t: number): void {
        this.state = setTime(this.state, t);
        void this.refreshNodes();
        this.requestFrame();
    }

    orbit(dAzimuth: number, dElevation: number): void {
        this.camera.azimuth += dAzimuth;
        this.camera.elevation = Math.min(
            1.5,
            Math.max(-1.5, this.camera.elevation + dElevation),
        );
        this.publishOverlay();
        this.requestFrame();
    }

    currentDrawList(): DrawList {
        if (!this.nodes) return { dots: [], segments: [] };
        return buildDrawList(
            this.camera,
            this.displayPositions(),
            this.nodes.edges,
            this.state.selected,
            this.nodes.isolated,
        );
    }

    pointerDown(u: number, v: number, depthAxis = false): boolean {
        if (!this.nodes) return false;
        const hit = hitTest(this.currentDrawList(), u, v);
        if (!hit) return false;
        // re-grabs continue from the current anchor, not the rest pose
        const start = this.anchors.get(hit.id) ?? (this.nodes.canonical[hit.id] as Vec3);
        this.anchors.set(hit.id, start);
        const projected = this.camera.project(start);
        this.state = beginDrag(this.state, {
            nodeId: hit.id,
            startScreen: [u, v],
            lastScreen: [u, v],
            startWorld: start,
            depth: projected.depth,
            depthAxis,
        });
        this.publishOverlay();
        return true;
    }

    pointerMove(u: number, v: number): void {
        const drag = this.state.drag;
        if (!drag) return;
        this.state = moveDrag(this.state, [u, v]);
        const du = u - drag.startScreen[0];
        const dv = v - drag.startScreen[1];
        const delta = drag.depthAxis
            ? this.camera.screenDeltaAlongView(dv, drag.depth)
            : this.camera.screenDeltaToWorld(du, dv, drag.depth);
        this.dragTarget = add(drag.startWorld, delta);
        this.anchors.set(drag.nodeId, this.dragTarget);
        this.submitHandles();
    }

    pointerUp(): void {
        this.state = endDrag(this.state);
    }

    // click without drag pins/unpins a node at its rest position
    togglePin(u: number, v: number): void {
        if (!this.nodes) return;
        const hit = hitTest(this.currentDrawList(), u, v);
        if (!hit) return;
        if (this.state.selected.includes(hit.id)) {
            this.anchors.delete(hit.id);
        } else {
            this.anchors.set(hit.id, this.nodes.canonical[hit.id] as Vec3);
        }
        this.state = toggleSelect(this.state, hit.id);
        this.publishOverlay();
    }

    submitHandles(): void {
        const ids = this.state.selected.filter((id) => this.anchors.has(id));
        const targets = ids.map((id) => this.anchors.get(id) as number[]);
        this.solveChan.submit({ ids, targets });
    }

    async escape(): Promise<void> {
        this.state = escapeEdit(this.state);
        this.anchors.clear();
        this.dragTarget = null;
        this.editActive = false;
        this.solvedPositions = null;
        await this.api.clearHandles();
        this.publishOverlay();
        this.requestFrame();
    }

    dispose(): void {
        if (this.retryTimer !== null) clearTimeout(this.retryTimer);
    }
}
