// Typed client for the dynsplat editing server (see docs/api.md).
// All methods throw ApiError on non-2xx responses; the JSON error body's
// "error" string becomes the message.

export interface LoadInfo {
    session: string;
    counts: { gaussians: number; control_points: number; edges: number };
    bbox: { min: [number, number, number]; max: [number, number, number] };
    time_range: [number, number];
    meta: Record<string, unknown>;
    warning?: string;
}

export interface NodeData {
    t: number;
    canonical: number[][];
    positions: number[][];
    edges: [number, number, number][];
    isolated: number[];
}

export interface SolveResult {
    positions: number[][];
    energy: number;
    iters: number;
    seq: number;
    coalesced: boolean;
    cleared?: boolean;
    warning?: string;
}

export interface RenderResult {
    png: Uint8Array;
    renderMs: number;
    mode: "edit" | "field";
}

export interface RenderParams {
    t?: number;
    azimuth?: number;
    elevation?: number;
    radius?: number;
    target?: [number, number, number];
    width?: number;
    height?: number;
    fovX?: number;
}

export class ApiError extends Error {
    status: number;

    constructor(status: number, message: string) {
        super(message);
        this.status = status;
    }
}

async function jsonOrThrow(resp: Response): Promise<any> {
    if (!resp.ok) {
        let message = `HTTP ${resp.status}`;
        try {
            const body = await resp.json();
            if (body && typeof body.error === "string") message = body.error;
        } catch {
            // non-JSON error body; keep the status message
        }
        throw new ApiError(resp.status, message);
    }
    return resp.json();
}

export class ApiClient {
    baseUrl: string;
    session: string | null = null;

    constructor(baseUrl: string) {
        this.baseUrl = baseUrl.replace(/\/$/, "");
    }

    private requireSession(): string {
        if (!this.session) throw new Error("no session: call load() first");
        return this.session;
    }

    async load(path: string): Promise<LoadInfo> {
        const resp = await fetch(`${this.baseUrl}/load`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({ path }),
        });
        const info = (await jsonOrThrow(resp)) as LoadInfo;
        this.session = info.session;
        return info;
    }

    async render(params: RenderParams = {}): Promise<RenderResult> {
        const q = new URLSearchParams({ session: this.requireSession() });
        if (params.t !== undefined) q.set("t", String(params.t));
        if (params.azimuth !== undefined) q.set("azimuth", String(params.azimuth));
        if (params.elevation !== undefined) q.set("elevation", String(params.elevation));
        if (params.radius !== undefined) q.set("radius", String(params.radius));
        if (params.target) {
            q.set("target_x", String(params.target[0]));
            q.set("target_y", String(params.target[1]));
            q.set("target_z", String(params.target[2]));
        }
        if (params.width !== undefined) q.set("width", String(params.width));
        if (params.height !== undefined) q.set("height", String(params.height));
        if (params.fovX !== undefined) q.set("fov_x", String(params.fovX));
        const resp = await fetch(`${this.baseUrl}/render?${q}`);
        if (!resp.ok) await jsonOrThrow(resp);
        const png = new Uint8Array(await resp.arrayBuffer());
        return {
            png,
            renderMs: Number(resp.headers.get("X-Render-Ms") ?? "0"),
            mode: (resp.headers.get("X-Render-Mode") ?? "field") as "edit" | "field",
        };
    }

    async nodes(t = 0): Promise<NodeData> {
        const q = new URLSearchParams({ session: this.requireSession(), t: String(t) });
        const resp = await fetch(`${this.baseUrl}/nodes?${q}`);
        return (await jsonOrThrow(resp)) as NodeData;
    }

    async setHandles(ids: number[], targets: number[][]): Promise<SolveResult> {
        const resp = await fetch(`${this.baseUrl}/handles`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({ session: this.requireSession(), ids, targets }),
        });
        return (await jsonOrThrow(resp)) as SolveResult;
    }

    async clearHandles(): Promise<void> {
        const resp = await fetch(`${this.baseUrl}/handles/clear`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({ session: this.requireSession() }),
        });
        await jsonOrThrow(resp);
    }

    async status(): Promise<any> {
        const q = new URLSearchParams({ session: this.requireSession() });
        return jsonOrThrow(await fetch(`${this.baseUrl}/status?${q}`));
    }
}
