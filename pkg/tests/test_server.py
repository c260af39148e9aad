"""Service tests: session lifecycle, frame rendering, handle editing over HTTP."""

import dataclasses
import hashlib
import threading
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from dynsplat.arap import (
    N_T_DEFAULT,
    build_graph,
    export_edge_list,
    parse_edge_list,
    trajectory,
)
from dynsplat.core import quaternion as quat
from dynsplat.deform import DeformationField, init_control_points
from dynsplat.io import SceneArchive, generate_synthetic, load_scene, save_scene
from dynsplat.scene import SceneRig, encode_png, orbit_camera, render_pixels
from dynsplat.server import ServerConfig, SessionStore, create_app

CAM = {
    "azimuth": 0.4,
    "elevation": 0.3,
    "radius": 3.0,
    "target_x": 0.0,
    "target_y": 0.2,
    "target_z": 0.0,
    "width": 64,
    "height": 64,
}


def _save(path, gaussians, control, field, meta=None):
    save_scene(
        SceneArchive(gaussians=gaussians, control=control, field=field, meta=meta or {}),
        str(path),
    )


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("scenes")
    ds = generate_synthetic("two_link_pendulum", n_frames=2, n_views=1, resolution=16, seed=0)
    gs = ds.gaussians
    ctrl = init_control_points(gs.mu, 12, seed=1)
    field = DeformationField.create(seed=2, width=32, depth=3)
    _save(root / "pend.dsplat", gs, ctrl, field, {"name": "pend"})

    frozen = dataclasses.replace(field, params=np.zeros_like(field.params))
    _save(root / "identity.dsplat", gs, ctrl, frozen)

    # two well-separated clumps of control points: a small graph radius
    # keeps them disconnected
    rng = np.random.default_rng(5)
    mu2 = np.concatenate(
        [rng.normal(size=(40, 3)) * 0.2, rng.normal(size=(40, 3)) * 0.2 + [5.0, 0, 0]]
    )
    gs2 = dataclasses.replace(
        gs,
        mu=mu2,
        q=np.tile([1.0, 0, 0, 0], (80, 1)),
        s=np.full((80, 3), 0.05),
        sigma=np.full(80, 0.6),
        sh=np.zeros((80, 1, 3)),
    )
    ctrl2 = init_control_points(mu2, 12, seed=3)
    _save(root / "clusters.dsplat", gs2, ctrl2, frozen)

    mu3 = rng.normal(size=(1500, 3))
    gs3 = dataclasses.replace(
        gs2,
        mu=mu3,
        q=np.tile([1.0, 0, 0, 0], (1500, 1)),
        s=np.full((1500, 3), 0.05),
        sigma=np.full(1500, 0.6),
        sh=np.zeros((1500, 1, 3)),
    )
    ctrl3 = init_control_points(mu3, 512, seed=4)
    _save(root / "big.dsplat", gs3, ctrl3, DeformationField.create(seed=4, width=32, depth=3))
    return root


@pytest.fixture(scope="module")
def client(scene_dir):
    app = create_app(ServerConfig(scene_root=str(scene_dir)))
    with TestClient(app, raise_server_exceptions=False) as c:
        yield c


def _load(client, name="pend.dsplat"):
    resp = client.post("/load", json={"path": name})
    assert resp.status_code == 200, resp.text
    return resp.json()


class TestLoad:
    def test_counts_match_archive(self, client, scene_dir):
        summary = _load(client)
        archive = load_scene(str(scene_dir / "pend.dsplat"))
        assert summary["counts"]["gaussians"] == len(archive.gaussians)
        assert summary["counts"]["control_points"] == len(archive.control)
        assert summary["counts"]["edges"] > 0
        assert summary["time_range"] == [0.0, 1.0]
        assert summary["meta"] == {"name": "pend"}

    def test_second_load_gets_distinct_session(self, client):
        assert _load(client)["session"] != _load(client)["session"]

    def test_bbox_matches_recomputed_centers(self, client, scene_dir):
        summary = _load(client)
        mu = load_scene(str(scene_dir / "pend.dsplat")).gaussians.mu
        assert np.allclose(summary["bbox"]["min"], mu.min(axis=0))
        assert np.allclose(summary["bbox"]["max"], mu.max(axis=0))

    def test_missing_archive_is_404(self, client):
        resp = client.post("/load", json={"path": "absent.dsplat"})
        assert resp.status_code == 404
        assert "absent.dsplat" in resp.json()["error"]

    def test_path_escape_rejected(self, client):
        resp = client.post("/load", json={"path": "../../etc/passwd"})
        assert resp.status_code == 400

    def test_corrupt_archive_reports_message(self, client, scene_dir):
        (scene_dir / "junk.dsplat").write_bytes(b"not an archive at all")
        resp = client.post("/load", json={"path": "junk.dsplat"})
        assert resp.status_code == 400
        assert "error" in resp.json()


class TestRender:
    def test_matches_offline_render_byte_for_byte(self, client, scene_dir):
        sid = _load(client)["session"]
        resp = client.get("/render", params={"session": sid, "t": 0.25, **CAM})
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "image/png"
        assert resp.headers["x-render-mode"] == "field"

        rig = SceneRig(load_scene(str(scene_dir / "pend.dsplat")))
        cam = orbit_camera(
            CAM["azimuth"],
            CAM["elevation"],
            CAM["radius"],
            (CAM["target_x"], CAM["target_y"], CAM["target_z"]),
            width=CAM["width"],
            height=CAM["height"],
        )
        offline = encode_png(render_pixels(rig.pose(0.25), cam))
        assert resp.content == offline

    def test_no_handles_equals_empty_handle_solve(self, client):
        sid = _load(client)["session"]
        before = client.get("/render", params={"session": sid, "t": 0.4, **CAM}).content
        resp = client.post("/handles", json={"session": sid, "ids": [], "targets": []})
        assert resp.status_code == 200
        assert resp.json()["cleared"] is True
        after = client.get("/render", params={"session": sid, "t": 0.4, **CAM}).content
        assert before == after

    def test_render_time_header_and_budget(self, client):
        sid = _load(client)["session"]
        params = {"session": sid, "t": 0.0, **CAM, "width": 256, "height": 256}
        client.get("/render", params=params)  # warm any jit caches
        resp = client.get("/render", params=params)
        assert float(resp.headers["x-render-ms"]) < 200.0

    def test_out_of_range_time_is_400(self, client):
        sid = _load(client)["session"]
        resp = client.get("/render", params={"session": sid, "t": 1.5, **CAM})
        assert resp.status_code == 400
        assert "outside" in resp.json()["error"]

    def test_invalid_camera_is_400(self, client):
        sid = _load(client)["session"]
        bad = dict(CAM, radius=-2.0)
        assert client.get("/render", params={"session": sid, **bad}).status_code == 400
        bad = dict(CAM, width=0)
        assert client.get("/render", params={"session": sid, **bad}).status_code == 400

    def test_unknown_session_is_404(self, client):
        assert client.get("/render", params={"session": "nope", **CAM}).status_code == 404


class TestNodes:
    def test_identity_field_returns_canonical_positions(self, client, scene_dir):
        sid = _load(client, "identity.dsplat")["session"]
        body = client.get("/nodes", params={"session": sid, "t": 0.0}).json()
        assert np.array_equal(body["positions"], body["canonical"])
        canonical = load_scene(str(scene_dir / "identity.dsplat")).control.p
        assert np.allclose(body["canonical"], canonical)

    def test_edges_match_graph_export(self, client, scene_dir):
        sid = _load(client)["session"]
        body = client.get("/nodes", params={"session": sid, "t": 0.0}).json()
        archive = load_scene(str(scene_dir / "pend.dsplat"))
        graph = build_graph(
            archive.control,
            trajectory(archive.field, archive.control, np.linspace(0, 1, N_T_DEFAULT)),
        )
        n, edges = parse_edge_list(export_edge_list(graph))
        assert n == len(body["canonical"])
        got = np.asarray(body["edges"], dtype=float)
        assert np.array_equal(got[:, :2].astype(int), edges[:, :2].astype(int))
        assert np.allclose(got[:, 2], edges[:, 2])

    def test_positions_move_continuously(self, client):
        sid = _load(client)["session"]
        summary = client.get("/status", params={"session": sid}).json()
        ts = np.linspace(0.0, 1.0, 241)  # steps of 1/240
        positions = np.array(
            [
                client.get("/nodes", params={"session": sid, "t": float(t)}).json()["positions"]
                for t in ts
            ]
        )
        jumps = np.linalg.norm(np.diff(positions, axis=0), axis=-1)
        body = client.get("/nodes", params={"session": sid, "t": 0.0}).json()
        lo = np.min(body["canonical"], axis=0)
        hi = np.max(body["canonical"], axis=0)
        diameter = float(np.linalg.norm(hi - lo))
        assert jumps.max() < 0.05 * diameter
        assert summary["counts"]["control_points"] == positions.shape[1]


class TestHandles:
    def test_canonical_handles_give_zero_energy(self, client):
        summary = _load(client)
        sid = summary["session"]
        body = client.get("/nodes", params={"session": sid, "t": 0.0}).json()
        p = np.asarray(body["canonical"])
        ids = [0, 5, 9]
        resp = client.post(
            "/handles", json={"session": sid, "ids": ids, "targets": p[ids].tolist()}
        )
        out = resp.json()
        assert resp.status_code == 200
        assert abs(out["energy"]) < 1e-10
        assert np.allclose(out["positions"], p, atol=1e-9)

    def test_rigid_handle_move_keeps_energy_near_zero(self, client):
        sid = _load(client)["session"]
        body = client.get("/nodes", params={"session": sid, "t": 0.0}).json()
        p = np.asarray(body["canonical"])
        angle, axis = 0.7, np.array([0.3, 1.0, 0.1]) / np.linalg.norm([0.3, 1.0, 0.1])
        q = np.concatenate([[np.cos(angle / 2)], np.sin(angle / 2) * axis])
        r = quat.to_matrix(q)
        shift = np.array([0.4, -0.1, 0.2])
        moved = p @ r.T + shift
        ids = [0, 3, 7, 11]
        out = client.post(
            "/handles", json={"session": sid, "ids": ids, "targets": moved[ids].tolist()}
        ).json()
        assert out["energy"] < 1e-8
        assert np.allclose(out["positions"], moved, atol=1e-6)

    def test_repeating_identical_handles_is_idempotent(self, client):
        sid = _load(client)["session"]
        body = client.get("/nodes", params={"session": sid, "t": 0.0}).json()
        tip = int(np.argmax(np.asarray(body["canonical"])[:, 1]))
        target = (np.asarray(body["canonical"])[tip] + [0.25, 0.0, 0.1]).tolist()
        payload = {"session": sid, "ids": [0, tip], "targets": [body["canonical"][0], target]}
        first = client.post("/handles", json=payload).json()
        second = client.post("/handles", json=payload).json()
        assert first["positions"] == second["positions"]
        assert second["coalesced"] is False
        status = client.get("/status", params={"session": sid}).json()
        assert status["solves"] == 1  # the repeat was served from the fixed point

    def test_unknown_node_id_is_400_naming_it(self, client):
        sid = _load(client)["session"]
        resp = client.post(
            "/handles", json={"session": sid, "ids": [99], "targets": [[0, 0, 0]]}
        )
        assert resp.status_code == 400
        assert "99" in resp.json()["error"]

    def test_malformed_targets_is_400(self, client):
        sid = _load(client)["session"]
        resp = client.post(
            "/handles", json={"session": sid, "ids": [1, 2], "targets": [[0, 0, 0]]}
        )
        assert resp.status_code == 400

    def test_set_then_clear_restores_original_render(self, client):
        sid = _load(client)["session"]
        original = client.get("/render", params={"session": sid, "t": 0.6, **CAM}).content
        body = client.get("/nodes", params={"session": sid, "t": 0.0}).json()
        target = (np.asarray(body["canonical"])[2] + [0.3, 0.2, 0.0]).tolist()
        client.post("/handles", json={"session": sid, "ids": [2], "targets": [target]})
        edited = client.get("/render", params={"session": sid, "t": 0.6, **CAM})
        assert edited.headers["x-render-mode"] == "edit"
        assert edited.content != original
        assert client.post("/handles/clear", json={"session": sid}).json() == {"ok": True}
        restored = client.get("/render", params={"session": sid, "t": 0.6, **CAM})
        assert restored.headers["x-render-mode"] == "field"
        assert restored.content == original

    def test_clear_without_handles_is_noop(self, client):
        sid = _load(client)["session"]
        assert client.post("/handles/clear", json={"session": sid}).status_code == 200

    def test_energy_absent_from_status_after_clear(self, client):
        sid = _load(client)["session"]
        body = client.get("/nodes", params={"session": sid, "t": 0.0}).json()
        p = np.asarray(body["canonical"])
        # one node pinned, another pulled away: the solve cannot be rigid
        targets = [p[0].tolist(), (p[4] + [0.3, 0.0, 0.0]).tolist()]
        client.post("/handles", json={"session": sid, "ids": [0, 4], "targets": targets})
        status = client.get("/status", params={"session": sid}).json()
        assert status["handles"]["energy"] > 0
        assert status["handles"]["ids"] == [0, 4]
        client.post("/handles/clear", json={"session": sid})
        assert client.get("/status", params={"session": sid}).json()["handles"] is None

    def test_disconnected_component_returns_warning(self, scene_dir):
        app = create_app(ServerConfig(scene_root=str(scene_dir), solver_radius=1.0))
        with TestClient(app) as local:
            resp = local.post("/load", json={"path": "clusters.dsplat"})
            sid = resp.json()["session"]
            body = local.get("/nodes", params={"session": sid, "t": 0.0}).json()
            p = np.asarray(body["canonical"])
            left = int(np.argmin(p[:, 0]))
            out = local.post(
                "/handles",
                json={
                    "session": sid,
                    "ids": [left],
                    "targets": [(p[left] + [0.2, 0, 0]).tolist()],
                },
            ).json()
            assert "pinning" in out.get("warning", "")

    def test_warm_drag_update_is_fast(self, client):
        sid = _load(client, "big.dsplat")["session"]
        body = client.get("/nodes", params={"session": sid, "t": 0.0}).json()
        p = np.asarray(body["canonical"])
        tip = int(np.argmax(p[:, 0]))
        base = {"session": sid, "ids": [0, tip]}
        client.post(
            "/handles",
            json={**base, "targets": [p[0].tolist(), (p[tip] + [0.3, 0, 0]).tolist()]},
        )
        start = time.perf_counter()
        resp = client.post(
            "/handles",
            json={**base, "targets": [p[0].tolist(), (p[tip] + [0.32, 0.01, 0]).tolist()]},
        )
        elapsed_ms = (time.perf_counter() - start) * 1000.0
        assert resp.status_code == 200
        assert elapsed_ms < 100.0


class TestSessions:
    def test_sessions_are_isolated(self, client):
        sid_a = _load(client)["session"]
        sid_b = _load(client)["session"]
        frame_b = client.get("/render", params={"session": sid_b, "t": 0.3, **CAM}).content
        body = client.get("/nodes", params={"session": sid_a, "t": 0.0}).json()
        target = (np.asarray(body["canonical"])[3] + [0.4, 0.0, 0.0]).tolist()
        client.post("/handles", json={"session": sid_a, "ids": [3], "targets": [target]})
        frame_a = client.get("/render", params={"session": sid_a, "t": 0.3, **CAM}).content
        frame_b_after = client.get("/render", params={"session": sid_b, "t": 0.3, **CAM}).content
        assert frame_b_after == frame_b
        assert frame_a != frame_b

    def test_service_never_mutates_archive(self, client, scene_dir):
        path = scene_dir / "pend.dsplat"
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        sid = _load(client)["session"]
        client.get("/render", params={"session": sid, "t": 0.1, **CAM})
        body = client.get("/nodes", params={"session": sid, "t": 0.0}).json()
        target = (np.asarray(body["canonical"])[1] + [0.2, 0.1, 0.0]).tolist()
        client.post("/handles", json={"session": sid, "ids": [1], "targets": [target]})
        client.get("/render", params={"session": sid, "t": 0.1, **CAM})
        client.post("/handles/clear", json={"session": sid})
        assert hashlib.sha256(path.read_bytes()).hexdigest() == digest

    def test_queued_drags_coalesce_to_latest(self, scene_dir):
        store = SessionStore(scene_root=str(scene_dir))
        sid = store.load("pend.dsplat")["session"]
        session = store.get(sid)
        tip = 3
        base = session.rig.archive.control.p[tip]
        results = []

        def drag(dx):
            results.append(store.set_handles(session, [tip], [(base + [dx, 0, 0]).tolist()]))

        def wait_for(cond, timeout=5.0):
            deadline = time.time() + timeout
            while time.time() < deadline:
                if cond():
                    return True
                time.sleep(0.002)
            return False

        # hold the work lock so both drags queue up before any solve runs
        session.lock.acquire()
        try:
            t1 = threading.Thread(target=drag, args=(0.1,))
            t1.start()
            assert wait_for(lambda: session._drag_seq == 1)
            t2 = threading.Thread(target=drag, args=(0.2,))
            t2.start()
            assert wait_for(lambda: session._drag_seq == 2)
        finally:
            session.lock.release()
        t1.join(timeout=10)
        t2.join(timeout=10)

        assert session.solves == 1  # the first drag was dropped, not solved
        assert sorted(r["coalesced"] for r in results) == [False, True]
        assert {r["seq"] for r in results} == {2}
        moved = np.asarray(results[0]["positions"])[tip]
        assert np.allclose(moved, base + [0.2, 0, 0], atol=1e-8)

    def test_status_counts_activity(self, client):
        sid = _load(client)["session"]
        before = client.get("/status", params={"session": sid}).json()
        client.get("/render", params={"session": sid, "t": 0.2, **CAM})
        after = client.get("/status", params={"session": sid}).json()
        assert after["renders"] == before["renders"] + 1
        assert after["counts"]["gaussians"] > 0
