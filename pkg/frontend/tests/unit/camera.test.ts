import { describe, expect, it } from "vitest";

import { OrbitCamera, Vec3, cross, dot, norm, sub } from "../../src/camera";

function makeCamera(azimuth: number, elevation: number): OrbitCamera {
    const cam = new OrbitCamera();
    cam.azimuth = azimuth;
    cam.elevation = elevation;
    cam.radius = 2.4;
    cam.target = [0.1, 0.2, -0.3];
    cam.width = 256;
    cam.height = 256;
    return cam;
}

const ANGLES: [number, number][] = [
    [0, 0.35],
    [1.1, -0.4],
    [Math.PI / 2, 0.35],
    [-2.7, 1.2],
    [4.0, 0.0],
    [0.3, Math.PI / 2], // looking straight down: degenerate up vector
    [0.3, -Math.PI / 2],
];

describe("OrbitCamera", () => {
    it("keeps the eye at orbit radius from the target", () => {
        for (const [az, el] of ANGLES) {
            const cam = makeCamera(az, el);
            expect(norm(sub(cam.eye(), cam.target))).toBeCloseTo(2.4, 12);
        }
    });

    it("produces a right-handed orthonormal basis, including degenerate poses", () => {
        for (const [az, el] of ANGLES) {
            const cam = makeCamera(az, el);
            const { right, down, fwd } = cam.basis();
            expect(norm(right)).toBeCloseTo(1, 10);
            expect(norm(down)).toBeCloseTo(1, 10);
            expect(norm(fwd)).toBeCloseTo(1, 10);
            expect(Math.abs(dot(right, down))).toBeLessThan(1e-10);
            expect(Math.abs(dot(right, fwd))).toBeLessThan(1e-10);
            expect(Math.abs(dot(down, fwd))).toBeLessThan(1e-10);
            expect(norm(sub(cross(fwd, right), down))).toBeLessThan(1e-10);
        }
    });

    it("projects the target to the image center", () => {
        const cam = makeCamera(0.7, 0.2);
        const pr = cam.project(cam.target);
        expect(pr.u).toBeCloseTo(cam.width / 2, 8);
        expect(pr.v).toBeCloseTo(cam.height / 2, 8);
        expect(pr.depth).toBeCloseTo(cam.radius, 12);
    });

    it("focal length follows the pinhole formula", () => {
        const cam = makeCamera(0, 0.35);
        expect(cam.focal()).toBeCloseTo((0.5 * 256) / Math.tan(0.5 * cam.fovX), 10);
        cam.width = 512;
        expect(cam.focal()).toBeCloseTo((0.5 * 512) / Math.tan(0.5 * cam.fovX), 10);
    });

    it("screenDeltaToWorld moves the projection by exactly the pixel delta", () => {
        for (const [az, el] of ANGLES) {
            const cam = makeCamera(az, el);
            const p: Vec3 = [0.25, 0.4, -0.1];
            const before = cam.project(p);
            if (before.depth <= 0) continue;
            const moved = cam.screenDeltaToWorld(17.5, -6.25, before.depth);
            const after = cam.project([p[0] + moved[0], p[1] + moved[1], p[2] + moved[2]]);
            expect(after.u - before.u).toBeCloseTo(17.5, 8);
            expect(after.v - before.v).toBeCloseTo(-6.25, 8);
            // camera-parallel plane: depth is preserved exactly
            expect(after.depth).toBeCloseTo(before.depth, 10);
        }
    });

    it("screenDeltaAlongView moves along the view axis only", () => {
        const cam = makeCamera(1.3, 0.5);
        const { fwd } = cam.basis();
        const depth = 2.0;
        const delta = cam.screenDeltaAlongView(30, depth);
        const len = (30 * depth) / cam.focal();
        expect(norm(delta)).toBeCloseTo(len, 10);
        expect(dot(delta, fwd)).toBeCloseTo(len, 10);
    });
});
