// Orbit camera mirroring the server's conventions exactly, so overlay
// projections land on the same pixels the renderer produces: camera frame
// is x right / y down / z forward, pixels u = fx*x/z + w/2, v = fy*y/z + h/2,
// fx = fy = (w/2) / tan(fovX/2), eye = target + r*[cosE*cosA, sinE, cosE*sinA].

export type Vec3 = [number, number, number];

export function sub(a: Vec3, b: Vec3): Vec3 {
    return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

export function add(a: Vec3, b: Vec3): Vec3 {
    return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

export function scale(a: Vec3, s: number): Vec3 {
    return [a[0] * s, a[1] * s, a[2] * s];
}

export function dot(a: Vec3, b: Vec3): number {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

export function cross(a: Vec3, b: Vec3): Vec3 {
    return [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
}

export function norm(a: Vec3): number {
    return Math.sqrt(dot(a, a));
}

export function normalize(a: Vec3): Vec3 {
    const n = norm(a);
    if (n < 1e-12) return [0, 0, 0];
    return scale(a, 1 / n);
}

export interface Projected {
    u: number;
    v: number;
    depth: number; // camera-frame z, world units; <= 0 means behind the eye
}

export class OrbitCamera {
    azimuth = 0;
    elevation = 0.35;
    radius = 2.4;
    target: Vec3 = [0, 0, 0];
    fovX = 0.8727; // 50 degrees, the server default
    width = 256;
    height = 256;

    eye(): Vec3 {
        const ce = Math.cos(this.elevation);
        const se = Math.sin(this.elevation);
        const ca = Math.cos(this.azimuth);
        const sa = Math.sin(this.azimuth);
        return add(this.target, scale([ce * ca, se, ce * sa], this.radius));
    }

    // rows of the world-to-camera rotation: right, down, forward
    basis(): { right: Vec3; down: Vec3; fwd: Vec3 } {
        const fwd = normalize(sub(this.target, this.eye()));
        let right = cross(fwd, [0, 1, 0]);
        if (norm(right) < 1e-12) {
            right = cross(fwd, Math.abs(fwd[0]) < 0.9 ? [1, 0, 0] : [0, 0, 1]);
        }
        right = normalize(right);
        const down = cross(fwd, right);
        return { right, down, fwd };
    }

    focal(): number {
        return (0.5 * this.width) / Math.tan(0.5 * this.fovX);
    }

    project(p: Vec3): Projected {
        const { right, down, fwd } = this.basis();
        const rel = sub(p, this.eye());
        const x = dot(right, rel);
        const y = dot(down, rel);
        const z = dot(fwd, rel);
        const f = this.focal();
        return {
            u: (f * x) / z + this.width / 2,
            v: (f * y) / z + this.height / 2,
            depth: z,
        };
    }

    // Screen-pixel delta to a world-space move on the camera-parallel plane
    // at the given depth. This is the drag mapping: the point stays under
    // the cursor while keeping its distance from the camera.
    screenDeltaToWorld(du: number, dv: number, depth: number): Vec3 {
        const { right, down } = this.basis();
        const perPixel = depth / this.focal();
        return add(scale(right, du * perPixel), scale(down, dv * perPixel));
    }

    // Depth-axis alternative (modifier drag): vertical pixels push the
    // point along the view direction, scaled like the parallel plane so
    // drag speed feels the same.
    screenDeltaAlongView(dv: number, depth: number): Vec3 {
        const { fwd } = this.basis();
        return scale(fwd, (dv * depth) / this.focal());
    }
}
