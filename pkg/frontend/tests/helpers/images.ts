// Image helpers for the tests: PNG decode to float RGB and an SSIM that
// matches the server's metric (11-tap gaussian window, sigma 1.5, zero
// padded separable filtering, mean taken over every pixel and channel).

import { PNG } from "pngjs";

export interface FloatImage {
    width: number;
    height: number;
    data: Float64Array; // H*W*3, row major, [0, 1]
}

export function decodePng(bytes: Uint8Array): FloatImage {
    const png = PNG.sync.read(Buffer.from(bytes));
    const { width, height } = png;
    const data = new Float64Array(width * height * 3);
    for (let i = 0; i < width * height; i++) {
        data[3 * i] = png.data[4 * i] / 255;
        data[3 * i + 1] = png.data[4 * i + 1] / 255;
        data[3 * i + 2] = png.data[4 * i + 2] / 255;
    }
    return { width, height, data };
}

const WINDOW = 11;
const SIGMA = 1.5;
const C1 = 0.01 ** 2;
const C2 = 0.03 ** 2;

function gaussKernel(): Float64Array {
    const half = Math.floor(WINDOW / 2);
    const k = new Float64Array(WINDOW);
    let sum = 0;
    for (let i = 0; i < WINDOW; i++) {
        k[i] = Math.exp(-((i - half) ** 2) / (2 * SIGMA * SIGMA));
        sum += k[i];
    }
    for (let i = 0; i < WINDOW; i++) k[i] /= sum;
    return k;
}

const KERNEL = gaussKernel();
const HALF = Math.floor(WINDOW / 2);

// separable correlation over rows then columns, zero padding outside
function filt(src: Float64Array, h: number, w: number): Float64Array {
    const tmp = new Float64Array(src.length);
    for (let y = 0; y < h; y++) {
        for (let x = 0; x < w; x++) {
            for (let c = 0; c < 3; c++) {
                let acc = 0;
                for (let k = -HALF; k <= HALF; k++) {
                    const yy = y + k;
                    if (yy < 0 || yy >= h) continue;
                    acc += KERNEL[k + HALF] * src[3 * (yy * w + x) + c];
                }
                tmp[3 * (y * w + x) + c] = acc;
            }
        }
    }
    const out = new Float64Array(src.length);
    for (let y = 0; y < h; y++) {
        for (let x = 0; x < w; x++) {
            for (let c = 0; c < 3; c++) {
                let acc = 0;
                for (let k = -HALF; k <= HALF; k++) {
                    const xx = x + k;
                    if (xx < 0 || xx >= w) continue;
                    acc += KERNEL[k + HALF] * tmp[3 * (y * w + xx) + c];
                }
                out[3 * (y * w + x) + c] = acc;
            }
        }
    }
    return out;
}

export function ssim(a: FloatImage, b: FloatImage): number {
    if (a.width !== b.width || a.height !== b.height) {
        throw new Error("ssim: image sizes differ");
    }
    const n = a.data.length;
    const aa = new Float64Array(n);
    const bb = new Float64Array(n);
    const ab = new Float64Array(n);
    for (let i = 0; i < n; i++) {
        aa[i] = a.data[i] * a.data[i];
        bb[i] = b.data[i] * b.data[i];
        ab[i] = a.data[i] * b.data[i];
    }
    const h = a.height;
    const w = a.width;
    const muA = filt(a.data, h, w);
    const muB = filt(b.data, h, w);
    const pa = filt(aa, h, w);
    const pb = filt(bb, h, w);
    const pab = filt(ab, h, w);
    let total = 0;
    for (let i = 0; i < n; i++) {
        const n1 = 2 * muA[i] * muB[i] + C1;
        const n2 = 2 * (pab[i] - muA[i] * muB[i]) + C2;
        const d1 = muA[i] * muA[i] + muB[i] * muB[i] + C1;
        const d2 = (pa[i] - muA[i] * muA[i]) + (pb[i] - muB[i] * muB[i]) + C2;
        total += (n1 * n2) / (d1 * d2);
    }
    return total / n;
}

// colorfulness-weighted centroid in a square window: locates a rendered
// feature to compare against a projected overlay dot
export function colorCentroid(
    img: FloatImage,
    u: number,
    v: number,
    half: number,
): { u: number; v: number } {
    let sw = 0;
    let su = 0;
    let sv = 0;
    for (let y = 0; y < img.height; y++) {
        if (Math.abs(y - v) > half) continue;
        for (let x = 0; x < img.width; x++) {
            if (Math.abs(x - u) > half) continue;
            const i = 3 * (y * img.width + x);
            const lo = Math.min(img.data[i], img.data[i + 1], img.data[i + 2]);
            const wgt = Math.min(1, Math.max(0, 1 - lo));
            sw += wgt;
            su += wgt * x;
            sv += wgt * y;
        }
    }
    if (sw === 0) return { u: NaN, v: NaN };
    return { u: su / sw, v: sv / sw };
}
