// DOM wiring: blits frames into the viewport, rasterizes overlay draw
// lists onto a transparent canvas, and forwards input to the Editor. All
// behavior worth testing lives in the imported modules.

import { ApiClient } from "./api";
import { Editor } from "./editor";
import { DrawList } from "./overlay";

const SERVER = (window as any).DYNSPLAT_SERVER ?? "http://127.0.0.1:8787";
const SCENE = new URLSearchParams(location.search).get("scene") ?? "scene.dsplat";

const viewport = document.getElementById("viewport") as HTMLImageElement;
const overlay = document.getElementById("overlay") as HTMLCanvasElement;
const timeline = document.getElementById("timeline") as HTMLInputElement;
const banner = document.getElementById("banner") as HTMLDivElement;
const toast = document.getElementById("toast") as HTMLDivElement;
const readout = document.getElementById("readout") as HTMLDivElement;

const ctx = overlay.getContext("2d")!;
let toastTimer: ReturnType<typeof setTimeout> | null = null;

function drawOverlay(draw: DrawList) {
    ctx.clearRect(0, 0, overlay.width, overlay.height);
    ctx.lineWidth = 1;
    for (const seg of draw.segments) {
        ctx.strokeStyle = `rgba(120, 170, 255, ${0.25 + 0.5 * seg.weight})`;
        ctx.beginPath();
        ctx.moveTo(seg.u0, seg.v0);
        ctx.lineTo(seg.u1, seg.v1);
        ctx.stroke();
    }
    for (const dot of draw.dots) {
        ctx.fillStyle = dot.selected ? "#ff9d2e" : dot.isolated ? "#d04040" : "#2e6bff";
        ctx.beginPath();
        ctx.arc(dot.u, dot.v, dot.selected ? 5 : 3.5, 0, 2 * Math.PI);
        ctx.fill();
    }
}

function showToast(message: string) {
    toast.textContent = message;
    toast.style.display = "block";
    if (toastTimer) clearTimeout(toastTimer);
    toastTimer = setTimeout(() => (toast.style.display = "none"), 4000);
}

const editor = new Editor(new ApiClient(SERVER), {
    onFrame(frame) {
        const bytes = new Uint8Array(new ArrayBuffer(frame.png.length));
        bytes.set(frame.png);
        const blob = new Blob([bytes], { type: "image/png" });
        const url = URL.createObjectURL(blob);
        const old = viewport.src;
        viewport.src = url;
        if (old.startsWith("blob:")) URL.revokeObjectURL(old);
        readout.textContent = `${frame.mode} ${frame.renderMs.toFixed(0)} ms`;
    },
    onOverlay: drawOverlay,
    onBanner(visible) {
        banner.style.display = visible ? "block" : "none";
    },
    onToast: showToast,
    onSolve(energy, iters) {
        readout.textContent = `energy ${energy.toExponential(2)} in ${iters} iters`;
    },
});

editor.camera.width = overlay.width;
editor.camera.height = overlay.height;

function pointerPos(ev: PointerEvent): [number, number] {
    const rect = overlay.getBoundingClientRect();
    return [
        ((ev.clientX - rect.left) / rect.width) * overlay.width,
        ((ev.clientY - rect.top) / rect.height) * overlay.height,
    ];
}

let downAt: [number, number] | null = null;
let dragging = false;
let orbiting = false;

overlay.addEventListener("pointerdown", (ev) => {
    const [u, v] = pointerPos(ev);
    downAt = [u, v];
    dragging = editor.pointerDown(u, v, ev.shiftKey);
    orbiting = !dragging;
    overlay.setPointerCapture(ev.pointerId);
});

overlay.addEventListener("pointermove", (ev) => {
    if (!downAt) return;
    const [u, v] = pointerPos(ev);
    if (dragging) {
        editor.pointerMove(u, v);
    } else if (orbiting) {
        editor.orbit((u - downAt[0]) * 0.01, (v - downAt[1]) * 0.005);
        downAt = [u, v];
    }
});

overlay.addEventListener("pointerup", (ev) => {
    const [u, v] = pointerPos(ev);
    if (downAt && !dragging && Math.hypot(u - downAt[0], v - downAt[1]) < 3) {
        editor.togglePin(u, v);
    }
    editor.pointerUp();
    downAt = null;
    dragging = false;
    orbiting = false;
});

window.addEventListener("keydown", (ev) => {
    if (ev.key === "Escape") void editor.escape();
});

timeline.addEventListener("input", () => {
    editor.scrub(Number(timeline.value));
});

editor.init(SCENE).catch((err) => {
    banner.textContent = `failed to load ${SCENE}: ${err.message ?? err}`;
    banner.style.display = "block";
});
