// End-to-end editor loop against the real server and the real pendulum
// archive: load, overlay consistency, a scripted ~50 px tip drag through
// the documented solve/render cycle, and Escape restoring the original.

import { readFileSync } from "node:fs";
import path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ApiError, RenderParams } from "../../src/api";
import { OrbitCamera, Vec3, dot, norm, sub } from "../../src/camera";
import { Editor } from "../../src/editor";
import { buildDrawList } from "../../src/overlay";
import { SCENE_ROOT, ServerHandle, startServer } from "../helpers/server";
import { colorCentroid, decodePng, ssim } from "../helpers/images";

const SCENE = "bent_pendulum.dsplat";
const DEG50 = (50 * Math.PI) / 180;

// the camera the golden edited image was rendered with
const GOLDEN_VIEW: RenderParams = {
    t: 0,
    azimuth: 0,
    elevation: 0.35,
    radius: 2.4,
    target: [0, 0.2, 0],
    width: 64,
    height: 64,
    fovX: DEG50,
};

let server: ServerHandle;

beforeAll(async () => {
    server = await startServer();
}, 60_000);

afterAll(async () => {
    await server?.stop();
});

function argBy(values: number[], better: (a: number, b: number) => boolean): number {
    let best = 0;
    for (let i = 1; i < values.length; i++) {
        if (better(values[i], values[best])) best = i;
    }
    return best;
}

describe("server api round-trip", () => {
    it("loads the archive and serves nodes, renders, and status", async () => {
        const api = new ApiClient(server.baseUrl);
        const info = await api.load(SCENE);
        expect(info.session).toBeTruthy();
        expect(info.counts.control_points).toBeGreaterThan(0);
        expect(info.counts.gaussians).toBeGreaterThan(0);
        expect(info.bbox.min.length).toBe(3);

        const nodes = await api.nodes(0);
        expect(nodes.canonical.length).toBe(info.counts.control_points);
        expect(nodes.positions.length).toBe(info.counts.control_points);

        const frame = await api.render({ t: 0, width: 32, height: 32 });
        const sig = [137, 80, 78, 71, 13, 10, 26, 10];
        expect(Array.from(frame.png.slice(0, 8))).toEqual(sig);
        expect(frame.mode).toBe("field");
        expect(frame.renderMs).toBeGreaterThan(0);

        const status = await api.status();
        expect(status).toBeTruthy();
    }, 60_000);

    it("reports errors as json messages", async () => {
        const api = new ApiClient(server.baseUrl);
        await expect(api.load("no_such_scene.dsplat")).rejects.toThrowError(ApiError);
        const orphan = new ApiClient(server.baseUrl);
        orphan.session = "not-a-session";
        await expect(orphan.nodes(0)).rejects.toThrowError(ApiError);
    }, 60_000);
});

describe("overlay projection consistency", () => {
    it("node dots coincide with rendered features within 3 px", async () => {
        const api = new ApiClient(server.baseUrl);
        await api.load(SCENE);
        const view: RenderParams = {
            t: 0,
            azimuth: 0,
            elevation: 0.35,
            radius: 2.4,
            target: [0, 0.2, 0],
            width: 256,
            height: 256,
            fovX: DEG50,
        };
        const frame = await api.render(view);
        const img = decodePng(frame.png);

        const cam = new OrbitCamera();
        cam.azimuth = view.azimuth!;
        cam.elevation = view.elevation!;
        cam.radius = view.radius!;
        cam.target = view.target as Vec3;
        cam.width = view.width!;
        cam.height = view.height!;
        cam.fovX = view.fovX!;

        const nodes = await api.nodes(0);
        const draw = buildDrawList(cam, nodes.positions, nodes.edges, [], nodes.isolated);
        expect(draw.dots.length).toBe(nodes.positions.length);
        for (const dotPr of draw.dots) {
            const feature = colorCentroid(img, dotPr.u, dotPr.v, 10);
            const err = Math.hypot(feature.u - dotPr.u, feature.v - dotPr.v);
            expect(err).toBeLessThanOrEqual(3);
        }
    }, 120_000);
});

describe("editor loop acceptance", () => {
    it("drags the tip ~50 px, solves, differs from original, matches golden, escape restores",
        async () => {
            const api = new ApiClient(server.baseUrl);
            const frames: number[] = [];
            let frameWaiters: (() => void)[] = [];
            let solveWaiters: (() => void)[] = [];
            let lastEnergy = -1;
            const editor = new Editor(api, {
                onFrame: () => {
                    frames.push(Date.now());
                    frameWaiters.splice(0).forEach((fn) => fn());
                },
                onSolve: (energy) => {
                    lastEnergy = energy;
                    solveWaiters.splice(0).forEach((fn) => fn());
                },
            });
            const nextFrame = () => new Promise<void>((res) => frameWaiters.push(res));
            const nextSolve = () => new Promise<void>((res) => solveWaiters.push(res));

            await editor.init(SCENE);
            await nextFrame();

            // the unedited reference at the golden viewpoint
            const original = await api.render(GOLDEN_VIEW);
            expect(original.mode).toBe("field");

            // pick the handle cast: highest node (stand top), the node nearest
            // y = 0.3 (mid link), and the lowest node (tip)
            const canon = editor.nodes!.canonical as Vec3[];
            const ys = canon.map((p) => p[1]);
            const top = argBy(ys, (a, b) => a > b);
            const tip = argBy(ys, (a, b) => a < b);
            const mid = argBy(
                ys.map((y) => Math.abs(y - 0.3)),
                (a, b) => a < b,
            );
            expect(new Set([top, mid, tip]).size).toBe(3);

            // side view so the drag delta lies in the camera plane
            editor.camera.azimuth = Math.PI / 2;
            editor.camera.elevation = 0.35;
            editor.camera.radius = 2.4;
            editor.camera.target = [0, 0.2, 0];
            editor.camera.width = 332;
            editor.camera.height = 332;

            const pinA = editor.camera.project(canon[top]);
            editor.togglePin(pinA.u, pinA.v);
            const pinB = editor.camera.project(canon[mid]);
            editor.togglePin(pinB.u, pinB.v);
            expect(editor.state.selected).toEqual([top, mid]);

            // pixel delta that carries the tip to rest + (0.35, 0.1, 0)
            const want: Vec3 = [0.35, 0.1, 0];
            const { right, down, fwd } = editor.camera.basis();
            const start = editor.camera.project(canon[tip]);
            const f = editor.camera.focal();
            const du = (dot(want, right) * f) / start.depth;
            const dv = (dot(want, down) * f) / start.depth;
            expect(Math.hypot(du, dv)).toBeGreaterThan(45);
            expect(Math.hypot(du, dv)).toBeLessThan(56);

            let t0 = performance.now();
            expect(editor.pointerDown(start.u, start.v)).toBe(true);
            editor.pointerMove(start.u + du, start.v + dv);
            await nextSolve();
            await nextFrame();
            const planeDragMs = performance.now() - t0;
            editor.pointerUp();
            expect(lastEnergy).toBeGreaterThan(0);
            expect(planeDragMs).toBeLessThanOrEqual(400);

            // second, smaller drag with the depth modifier supplies the
            // view-axis component the plane drag cannot express
            const anchor1 = editor.anchors.get(tip)!;
            const grab = editor.camera.project(anchor1);
            const remaining = sub([canon[tip][0] + 0.35, canon[tip][1] + 0.1, canon[tip][2]], anchor1);
            const dvDepth = (dot(remaining, fwd) * f) / grab.depth;
            t0 = performance.now();
            expect(editor.pointerDown(grab.u, grab.v, true)).toBe(true);
            editor.pointerMove(grab.u, grab.v + dvDepth);
            await nextSolve();
            await nextFrame();
            const depthDragMs = performance.now() - t0;
            editor.pointerUp();
            expect(depthDragMs).toBeLessThanOrEqual(400);

            const achieved = editor.anchors.get(tip)!;
            const goal: Vec3 = [canon[tip][0] + 0.35, canon[tip][1] + 0.1, canon[tip][2]];
            expect(norm(sub(achieved, goal))).toBeLessThan(1e-9);

            // the edited pose at the golden viewpoint
            const edited = await api.render(GOLDEN_VIEW);
            expect(edited.mode).toBe("edit");
            const imgOriginal = decodePng(original.png);
            const imgEdited = decodePng(edited.png);
            const golden = decodePng(readFileSync(path.join(SCENE_ROOT, "bent_pendulum_golden.png")));

            const vsOriginal = ssim(imgEdited, imgOriginal);
            const vsGolden = ssim(imgEdited, golden);
            expect(vsOriginal).toBeLessThan(0.99);
            expect(vsGolden).toBeGreaterThanOrEqual(0.95);

            // escape clears the edit server-side; the render comes back
            // byte-identical to the original
            await editor.escape();
            const restored = await api.render(GOLDEN_VIEW);
            expect(restored.mode).toBe("field");
            expect(Buffer.from(restored.png).equals(Buffer.from(original.png))).toBe(true);

            editor.dispose();
        },
        120_000,
    );
});
