import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from voxelforge import LabelVolume, Volume
from voxelforge.nifti import from_bytes, to_bytes
from voxelforge.service import ServiceConfig, changed_bbox, create_app, rle_encode_plane


@pytest.fixture
def client(tmp_path):
    config = ServiceConfig(data_dir=tmp_path / "data", patch_size=(16, 16, 16))
    app = create_app(config)
    with TestClient(app) as c:
        yield c


def demo_volume():
    rng = np.random.default_rng(0)
    data = (rng.random((20, 18, 16)) * 100).astype(np.float32)
    return Volume(data, spacing=(1.0, 1.0, 2.0))


def demo_gt():
    data = np.zeros((20, 18, 16), dtype=np.int32)
    data[2:8, 2:8, 2:8] = 5
    data[12:16, 12:16, 10:14] = 5
    return LabelVolume(data, spacing=(1.0, 1.0, 2.0))


def upload(client, container) -> str:
    r = client.post("/volumes", content=to_bytes(container))
    assert r.status_code == 200, r.text
    return r.json()["volume_id"]


def oracle_session(client, class_index=5):
    vol_id = upload(client, demo_volume())
    gt_id = upload(client, demo_gt())
    r = client.post(
        "/sessions",
        json={
            "volume_id": vol_id,
            "class_index": class_index,
            "predictor": "oracle",
            "gt_volume_id": gt_id,
        },
    )
    assert r.status_code == 200, r.text
    return r.json()["session_id"], vol_id


class TestVolumes:
    def test_upload_round_trip(self, client):
        vol = demo_volume()
        vol_id = upload(client, vol)
        info = client.get(f"/volumes/{vol_id}").json()
        assert info["dims"] == [20, 18, 16]
        assert info["spacing"] == [1.0, 1.0, 2.0]

    def test_unknown_volume_404(self, client):
        assert client.get("/volumes/doesnotexist").status_code == 404

    def test_oversize_upload_413(self, tmp_path):
        config = ServiceConfig(data_dir=tmp_path / "small", max_upload_mb=0)
        with TestClient(create_app(config)) as c:
            r = c.post("/volumes", content=b"x" * 2048)
            assert r.status_code == 413

    def test_malformed_upload_422(self, client):
        r = client.post("/volumes", content=b"not a nifti file at all")
        assert r.status_code == 422

    def test_slice_png(self, client):
        vol_id = upload(client, demo_volume())
        r = client.get(f"/volumes/{vol_id}/slice", params={"axis": 2, "index": 3})
        assert r.status_code == 200
        assert r.headers["content-type"] == "image/png"
        from PIL import Image
        import io

        img = Image.open(io.BytesIO(r.content))
        assert img.size == (20, 18)  # width = x extent, height = y extent

    def test_slice_png_pixel_values_follow_the_window(self, client):
        data = np.zeros((4, 3, 2), dtype=np.float32)
        data[1, 1, 0] = 50.0
        data[2, 2, 0] = 100.0
        vol_id = upload(client, Volume(data))
        r = client.get(
            f"/volumes/{vol_id}/slice", params={"axis": 2, "index": 0, "window": "0,100"}
        )
        from PIL import Image
        import io

        img = np.asarray(Image.open(io.BytesIO(r.content)))
        assert img.shape == (3, 4)  # rows = y, cols = x
        assert img[0, 0] == 0
        assert img[1, 1] == 128  # 50/100 scaled with round-half-up
        assert img[2, 2] == 255

    def test_slice_index_out_of_range_422(self, client):
        vol_id = upload(client, demo_volume())
        r = client.get(f"/volumes/{vol_id}/slice", params={"axis": 2, "index": 16})
        assert r.status_code == 422

    def test_slice_window_validation(self, client):
        vol_id = upload(client, demo_volume())
        r = client.get(
            f"/volumes/{vol_id}/slice", params={"axis": 0, "index": 0, "window": "5,5"}
        )
        assert r.status_code == 422

    def test_supervoxels_cached_and_parseable(self, client, tmp_path):
        vol_id = upload(client, demo_volume())
        params = {"n": 8, "sigma": 1.0}
        r1 = client.get(f"/volumes/{vol_id}/supervoxels", params=params)
        assert r1.status_code == 200
        r2 = client.get(f"/volumes/{vol_id}/supervoxels", params=params)
        assert r1.content == r2.content
        sv = from_bytes(r1.content)
        assert sv.dims == (20, 18, 16)
        assert sv.data.max() <= 8
        assert sv.data.min() >= 1


class TestSessions:
    def test_create_and_snapshot(self, client):
        session_id, vol_id = oracle_session(client)
        snap = client.get(f"/sessions/{session_id}").json()
        assert snap["volume_id"] == vol_id
        assert snap["version"] == 0
        assert snap["clicks"] == 0
        assert snap["dims"] == [20, 18, 16]
        assert snap["dice"] == 0.0  # empty mask vs nonempty gt

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope").status_code == 404
        assert client.post("/sessions/nope/undo").status_code == 404

    def test_session_with_unknown_volume_404(self, client):
        r = client.post("/sessions", json={"volume_id": "missing", "class_index": 1})
        assert r.status_code == 404

    def test_oracle_requires_gt(self, client):
        vol_id = upload(client, demo_volume())
        r = client.post(
            "/sessions", json={"volume_id": vol_id, "class_index": 1, "predictor": "oracle"}
        )
        assert r.status_code == 422

    def test_click_outside_dims_422_with_field_path(self, client):
        session_id, _ = oracle_session(client)
        r = client.post(
            f"/sessions/{session_id}/clicks", json={"xyz": [99, 0, 0], "polarity": "pos"}
        )
        assert r.status_code == 422
        assert r.json()["detail"][0]["loc"] == ["body", "xyz", 0]

    def test_click_then_undo_restores_bytes(self, client):
        session_id, _ = oracle_session(client)
        mask_v0 = client.get(f"/sessions/{session_id}/mask").content

        r1 = client.post(
            f"/sessions/{session_id}/clicks", json={"xyz": [4, 4, 4], "polarity": "pos"}
        )
        assert r1.json()["version"] == 1
        mask_v1 = client.get(f"/sessions/{session_id}/mask").content
        assert mask_v1 != mask_v0

        r2 = client.post(
            f"/sessions/{session_id}/clicks", json={"xyz": [13, 13, 11], "polarity": "pos"}
        )
        assert r2.json()["version"] == 2

        r3 = client.post(f"/sessions/{session_id}/undo")
        assert r3.json()["version"] == 3
        mask_v3 = client.get(f"/sessions/{session_id}/mask").content
        assert mask_v3 == mask_v1  # undo content equals the version-1 mask

    def test_changed_bbox_bounds_the_diff(self, client):
        session_id, _ = oracle_session(client)
        before = from_bytes(client.get(f"/sessions/{session_id}/mask").content)
        r = client.post(
            f"/sessions/{session_id}/clicks", json={"xyz": [4, 4, 4], "polarity": "pos"}
        )
        bbox = r.json()["changed_bbox"]
        after = from_bytes(client.get(f"/sessions/{session_id}/mask").content)
        diff = np.argwhere(before.data != after.data)
        assert len(diff) > 0
        lo, hi = diff.min(axis=0), diff.max(axis=0)
        assert bbox == [*map(int, lo), *map(int, hi)]

    def test_noop_click_has_null_bbox(self, client):
        session_id, _ = oracle_session(client)
        r = client.post(
            f"/sessions/{session_id}/clicks", json={"xyz": [0, 0, 0], "polarity": "neg"}
        )
        assert r.json()["changed_bbox"] is None

    def test_undo_empty_history_409(self, client):
        session_id, _ = oracle_session(client)
        assert client.post(f"/sessions/{session_id}/undo").status_code == 409

    def test_mask_get_is_stable_across_reads(self, client):
        session_id, _ = oracle_session(client)
        client.post(f"/sessions/{session_id}/clicks", json={"xyz": [4, 4, 4], "polarity": "pos"})
        a = client.get(f"/sessions/{session_id}/mask").content
        b = client.get(f"/sessions/{session_id}/mask").content
        assert a == b

    def test_auto_with_oracle_matches_gt(self, client):
        session_id, _ = oracle_session(client)
        r = client.post(f"/sessions/{session_id}/auto")
        assert r.status_code == 200
        assert r.json()["version"] == 1
        mask = from_bytes(client.get(f"/sessions/{session_id}/mask").content)
        np.testing.assert_array_equal(mask.data > 0, demo_gt().data == 5)
        snap = client.get(f"/sessions/{session_id}").json()
        assert snap["dice"] == 1.0

    def test_auto_with_region_grow_is_422(self, client):
        vol_id = upload(client, demo_volume())
        r = client.post("/sessions", json={"volume_id": vol_id, "class_index": 3})
        session_id = r.json()["session_id"]
        assert client.post(f"/sessions/{session_id}/auto").status_code == 422

    def test_auto_on_zero_shot_session_is_422(self, client):
        vol_id = upload(client, demo_volume())
        r = client.post("/sessions", json={"volume_id": vol_id, "class_index": "zero_shot"})
        session_id = r.json()["session_id"]
        assert client.post(f"/sessions/{session_id}/auto").status_code == 422

    def test_external_predictor_session(self, tmp_path):
        import sys

        # stdio plug-in: probability 1 inside a fixed box around the click patch
        plugin = (
            "import base64, json, sys\n"
            "import numpy as np\n"
            "for line in sys.stdin:\n"
            "    req = json.loads(line)\n"
            "    size = req['patch']['size']\n"
            "    prob = np.zeros(size, dtype='<f4', order='F')\n"
            "    if req['op'] == 'interactive':\n"
            "        ox, oy, oz = req['patch']['origin']\n"
            "        prob[max(0, 2 - ox):max(0, 6 - ox), max(0, 2 - oy):max(0, 6 - oy), max(0, 2 - oz):max(0, 6 - oz)] = 1.0\n"
            "    payload = base64.b64encode(prob.tobytes(order='F')).decode()\n"
            "    print(json.dumps({'prob': payload}), flush=True)\n"
        )
        config = ServiceConfig(
            data_dir=tmp_path / "ext",
            patch_size=(8, 8, 8),
            external_predictors={"boxer": [sys.executable, "-c", plugin]},
        )
        with TestClient(create_app(config)) as c:
            vol_id = upload(c, demo_volume())
            r = c.post(
                "/sessions",
                json={"volume_id": vol_id, "class_index": "zero_shot",
                      "predictor": "external:boxer"},
            )
            assert r.status_code == 200, r.text
            session_id = r.json()["session_id"]
            reply = c.post(
                f"/sessions/{session_id}/clicks", json={"xyz": [3, 3, 3], "polarity": "pos"}
            ).json()
            assert reply["version"] == 1
            mask = from_bytes(c.get(f"/sessions/{session_id}/mask").content)
            expect = np.zeros((20, 18, 16), dtype=bool)
            expect[2:6, 2:6, 2:6] = True
            np.testing.assert_array_equal(mask.data > 0, expect)

    def test_session_survives_restart_by_replay(self, tmp_path):
        config = ServiceConfig(data_dir=tmp_path / "persist", patch_size=(16, 16, 16))
        with TestClient(create_app(config)) as c:
            session_id, _ = oracle_session(c)
            c.post(f"/sessions/{session_id}/clicks", json={"xyz": [4, 4, 4], "polarity": "pos"})
            mask_before = c.get(f"/sessions/{session_id}/mask").content
        with TestClient(create_app(config)) as c2:
            snap = c2.get(f"/sessions/{session_id}").json()
            assert snap["clicks"] == 1
            assert snap["version"] == 1
            assert c2.get(f"/sessions/{session_id}/mask").content == mask_before


class TestMaskEncodings:
    def test_rle_slice_decodes_to_mask_plane(self, client):
        session_id, _ = oracle_session(client)
        client.post(f"/sessions/{session_id}/clicks", json={"xyz": [4, 4, 4], "polarity": "pos"})
        mask = from_bytes(client.get(f"/sessions/{session_id}/mask").content)
        for axis in (0, 1, 2):
            index = 4
            r = client.get(
                f"/sessions/{session_id}/mask/slice", params={"axis": axis, "index": index}
            )
            doc = r.json()
            plane = np.take(mask.data, index, axis=axis)
            decoded = np.zeros(plane.shape, dtype=bool)
            for v, runs in enumerate(doc["rle"]):
                for start, length in runs:
                    decoded[start : start + length, v] = True
            np.testing.assert_array_equal(decoded, plane > 0)

    def test_full_volume_rle(self, client):
        session_id, _ = oracle_session(client)
        client.post(f"/sessions/{session_id}/clicks", json={"xyz": [4, 4, 4], "polarity": "pos"})
        doc = client.get(f"/sessions/{session_id}/mask", params={"format": "rle"}).json()
        mask = from_bytes(client.get(f"/sessions/{session_id}/mask").content)
        flat = np.zeros(int(np.prod(doc["dims"])), dtype=bool)
        for start, length in doc["rle"]:
            flat[start : start + length] = True
        np.testing.assert_array_equal(flat.reshape(doc["dims"], order="F"), mask.data > 0)

    def test_rle_encode_plane_full_row(self):
        plane = np.zeros((7, 3), dtype=bool)
        plane[:, 1] = True
        rows = rle_encode_plane(plane)
        assert rows[0] == []
        assert rows[1] == [[0, 7]]
        assert rows[2] == []


def test_config_env_overrides(tmp_path, monkeypatch):
    config_file = tmp_path / "svc.json"
    config_file.write_text(json.dumps({"port": 9999, "max_upload_mb": 7}))
    monkeypatch.setenv("VF_PORT", "5555")
    monkeypatch.setenv("VF_DATA_DIR", str(tmp_path / "envdata"))
    monkeypatch.setenv("VF_MAX_UPLOAD_MB", "11")
    cfg = ServiceConfig.load(str(config_file))
    assert cfg.port == 5555  # env beats file
    assert cfg.max_upload_mb == 11
    assert cfg.data_dir == tmp_path / "envdata"
    explicit = ServiceConfig.load(str(config_file), port=1234)
    assert explicit.port == 1234  # explicit beats env


def test_changed_bbox_helper():
    a = np.zeros((4, 4, 4), dtype=bool)
    b = a.copy()
    assert changed_bbox(a, b) is None
    b[1, 2, 3] = True
    b[2, 2, 3] = True
    assert changed_bbox(a, b) == [1, 2, 3, 2, 2, 3]
