import json
import math

import pytest

import crowdserve


def test_exports():
    for name in ("Index", "Model", "derive_context", "haversine_m", "load_model",
                 "replay", "score", "train"):
        assert hasattr(crowdserve, name)


def test_haversine():
    assert crowdserve.haversine_m(0, 0, 0, 0) == 0.0
    quarter = crowdserve.haversine_m(0, 0, 90, 0)
    assert quarter == pytest.approx(math.pi * 6_371_000 / 2, rel=1e-12)


def test_score_breakdown():
    got = crowdserve.score(
        keywords=["firstaid", "repair"], lat=0.0, lon=0.0, at=7200,
        skills=["repair"], obj_lat=0.0, obj_lon=0.045, positioned_at=3600)
    assert got["textual"] == 0.5
    assert got["recency"] == 0.5
    assert got["spatial"] == pytest.approx(0.4996228300994858, abs=1e-12)
    assert got["total"] == pytest.approx(0.24990570752487146, abs=1e-12)


def test_index_round_trip():
    index = crowdserve.Index()
    index.insert("t1", ["repair"], 0.0, 0.01, 3600)
    index.insert("t2", ["plumbing", "repair"], 0.0, 0.02, 3600)
    assert len(index) == 2
    assert "t1" in index
    assert "missing" not in index

    found = index.find("t1")
    assert found["id"] == "t1"
    assert found["skills"] == ["repair"]

    rows = index.query(["repair"], 0.0, 0.0, 7200, k=10)
    assert [r["id"] for r in rows] == ["t1", "t2"]
    assert rows[0]["rank"] == 1
    assert rows[0]["score"] > rows[1]["score"]

    index.update_location("t1", 0.0, 0.03, 7200)
    assert index.find("t1")["lon"] == 0.03
    index.update_profile("t2", add=["wiring"])
    assert "wiring" in index.find("t2")["skills"]
    index.audit()

    index.remove("t1")
    assert len(index) == 1


def test_index_errors():
    index = crowdserve.Index()
    with pytest.raises(ValueError):
        index.insert("bad", ["x"], 99.0, 0.0, 0)
    with pytest.raises(ValueError):
        index.insert("bad", [], 0.0, 0.0, 0)
    with pytest.raises(KeyError):
        index.remove("missing")
    index.insert("t1", ["x"], 0.0, 0.0, 100)
    with pytest.raises(ValueError):
        index.query([], 0.0, 0.0, 100)


def test_train_predict_dump_load():
    ratings = [
        {"user_id": "u1", "turk_id": "t1", "rating": 4.5},
        {"user_id": "u1", "turk_id": "t2", "rating": 2.0},
        {"user_id": "u2", "turk_id": "t1", "rating": 5.0},
        {"user_id": "u2", "turk_id": "t2", "rating": 1.5},
    ]
    model = crowdserve.train(ratings, factors=2, epochs=25, seed=3)
    assert 1.5 <= model.mu <= 5.0
    assert len(model.training_curve) == 25

    value = model.predict("u1", "t1")
    assert 1.0 <= value <= 5.0

    reloaded = crowdserve.load_model(model.dump())
    assert reloaded == model
    assert reloaded.predict("u1", "t1") == value

    ranked = model.recommend("u1", ["repair"], 0.0, 0.0, 3600,
                             pool=["t1", "t2"], m=2)
    assert [turk for turk, _ in ranked] == sorted(
        ["t1", "t2"], key=lambda t: (-model.predict("u1", t,
            crowdserve.derive_context(["repair"], 0.0, 0.0, 3600)), t))


def test_derive_context():
    ctx = crowdserve.derive_context(["repair"], 10.0, 20.0, 9 * 3600)
    assert ctx["time_bucket"] == "morning"
    assert len(ctx["location_cell"]) == 8
    assert ctx["skill_domain"] == "repair"


def test_replay(tmp_path):
    log = tmp_path / "events.jsonl"
    lines = [
        {"kind": "REGISTER", "object_id": "t1", "at": 100,
         "payload": {"id": "t1", "skills": ["welding"], "lat": 1.0, "lon": 2.0,
                     "positioned_at": 100}},
        {"kind": "LOCATION_UPDATE", "object_id": "t1", "at": 200,
         "payload": {"lat": 1.5, "lon": 2.5, "positioned_at": 200}},
    ]
    log.write_text("".join(json.dumps(line) + "\n" for line in lines))

    out = crowdserve.replay(str(log))
    assert out["corruption"] is None
    index = out["index"]
    assert len(index) == 1
    assert index.find("t1")["lat"] == 1.5

    # Torn tail: reported with its byte offset, prefix still applied.
    clean_size = log.stat().st_size
    with open(log, "ab") as fh:
        fh.write(b'{"kind": "REGISTER", "object_id": "t2"')
    torn = crowdserve.replay(str(log))
    assert torn["corruption"] is not None
    assert torn["corruption"]["byte_offset"] == clean_size
    assert len(torn["index"]) == 1


def test_replay_missing_file():
    with pytest.raises(RuntimeError):
        crowdserve.replay("/no/such/log.jsonl")
