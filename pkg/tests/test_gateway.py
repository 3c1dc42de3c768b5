import json

import pytest
from fastapi.testclient import TestClient

from radchain.gateway import LOGIN_NONCE_PREFIX, build_app, build_demo_context


@pytest.fixture(scope="module")
def gw():
    ctx = build_demo_context(seed=7)
    app = build_app(ctx)
    client = TestClient(app)
    return ctx, client


def login(ctx, client, user):
    r = client.post("/v1/login", json={"user_id": user})
    assert r.status_code == 200, r.text
    nonce = r.json()["nonce"]
    kp = ctx.keystore.get(user)
    sig = kp.sign(LOGIN_NONCE_PREFIX + bytes.fromhex(nonce))
    r = client.post(
        "/v1/login", json={"user_id": user, "nonce": nonce, "signature": sig.hex()}
    )
    assert r.status_code == 200, r.text
    return {"Authorization": "Bearer " + r.json()["session_id"]}


def test_login_challenge_response(gw):
    ctx, client = gw
    headers = login(ctx, client, "rad-001")
    assert client.get("/v1/worklist", headers=headers).status_code == 200


def test_login_rejects_bad_signature(gw):
    ctx, client = gw
    r = client.post("/v1/login", json={"user_id": "rad-001"})
    nonce = r.json()["nonce"]
    r = client.post(
        "/v1/login",
        json={"user_id": "rad-001", "nonce": nonce, "signature": "00" * 64},
    )
    assert r.status_code == 401


def test_login_unknown_user(gw):
    _ctx, client = gw
    assert client.post("/v1/login", json={"user_id": "ghost"}).status_code == 401


def test_requests_require_session(gw):
    _ctx, client = gw
    assert client.get("/v1/worklist").status_code == 401
    bad = {"Authorization": "Bearer nope"}
    assert client.get("/v1/worklist", headers=bad).status_code == 401


def test_expired_session_rejected():
    ctx = build_demo_context(seed=8, session_ttl_s=0)
    client = TestClient(build_app(ctx))
    r = client.post("/v1/login", json={"user_id": "rad-001"})
    nonce = r.json()["nonce"]
    kp = ctx.keystore.get("rad-001")
    sig = kp.sign(LOGIN_NONCE_PREFIX + bytes.fromhex(nonce))
    r = client.post(
        "/v1/login", json={"user_id": "rad-001", "nonce": nonce, "signature": sig.hex()}
    )
    headers = {"Authorization": "Bearer " + r.json()["session_id"]}
    assert client.get("/v1/worklist", headers=headers).status_code == 401


def test_worklist_shape_and_completeness(gw):
    ctx, client = gw
    headers = login(ctx, client, "rad-001")
    entries = client.get("/v1/worklist", headers=headers).json()["entries"]
    by_id = {e["exam_id"]: e for e in entries}
    assert by_id["EX-1002"]["completeness"] == {"status": "incomplete", "missing": 1}
    assert by_id["EX-1001"]["completeness"] == {"status": "complete"}


def test_access_request_grant_and_images(gw):
    ctx, client = gw
    headers = login(ctx, client, "rad-001")
    r = client.post("/v1/access-requests", json={"exam_id": "EX-1001", "reason": 0}, headers=headers)
    assert r.status_code == 201
    body = r.json()
    assert body["status"] == "granted"
    assert len(body["tx_id"]) == 64 and len(body["evaluation_tx_id"]) == 64
    # The response tx_id is verifiable on-chain.
    channel = "telerad"
    led = ctx.network.peer_for_channel(channel).store.channel(channel)
    assert led.find_tx(bytes.fromhex(body["tx_id"])) is not None

    r = client.post("/v1/view-links", json={"exam_id": "EX-1001"}, headers=headers)
    assert r.status_code == 201
    url = r.json()["view_url"]
    assert url.startswith("/v1/images/EX-1001?token=")
    r = client.get(url)
    assert r.status_code == 200
    assert led.find_tx(bytes.fromhex(r.headers["X-Radchain-Tx"])) is not None

    worklist = client.get("/v1/worklist", headers=headers).json()["entries"]
    assert {e["exam_id"]: e["access_status"] for e in worklist}["EX-1001"] == "granted"


def test_report_alert_stream_and_ack(gw):
    ctx, client = gw
    rad = login(ctx, client, "rad-001")
    phy = login(ctx, client, "phy-002")

    client.post("/v1/access-requests", json={"exam_id": "EX-1002", "reason": 0}, headers=rad)
    r = client.post(
        "/v1/reports",
        json={
            "exam_id": "EX-1002",
            "body_text": "CT angiogram reviewed.",
            "impression_text": "Findings: acute stroke.",
        },
        headers=rad,
    )
    assert r.status_code == 201
    assert r.json()["is_critical"] and r.json()["matched_keywords"] == ["acute stroke"]

    alerts = client.get("/v1/alerts", headers=phy).json()["alerts"]
    assert len(alerts) == 1
    alert = alerts[0]
    assert alert["matched_keywords"] == ["acute stroke"]

    # Stream delivery: alert arrives on the SSE stream with its seq id.
    with client.stream("GET", "/v1/alerts/stream?once=true", headers=phy) as stream:
        lines = []
        for line in stream.iter_lines():
            lines.append(line)
            if line.startswith("data:"):
                break
        payload = json.loads([l for l in lines if l.startswith("data:")][0][5:])
        assert payload["alert_id"] == alert["alert_id"]
        event_id = [l for l in lines if l.startswith("id:")][0].split()[1]
        assert int(event_id) == alert["seq"]

    # Radiologists may not open the stream.
    r = client.get("/v1/alerts/stream", headers=rad)
    assert r.status_code == 403
    r = client.get("/v1/alerts", headers=rad)
    assert r.status_code == 403

    # Non-recipient physician cannot ack.
    other = login(ctx, client, "phy-001")
    r = client.post(f"/v1/alerts/{alert['alert_id']}/ack", headers=other)
    assert r.status_code in (403, 404)

    r = client.post(f"/v1/alerts/{alert['alert_id']}/ack", headers=phy)
    assert r.status_code == 200
    tx_id = bytes.fromhex(r.json()["tx_id"])
    led = ctx.network.peer_for_channel("telerad").store.channel("telerad")
    assert led.find_tx(tx_id) is not None
    r = client.post(f"/v1/alerts/{alert['alert_id']}/ack", headers=phy)
    assert r.status_code == 409


def test_stream_resume_with_last_event_id(gw):
    ctx, client = gw
    rad = login(ctx, client, "rad-001")
    phy = login(ctx, client, "phy-001")
    # Two critical reports commit while the physician is disconnected.
    for exam in ("EX-1001", "EX-1003"):
        client.post("/v1/access-requests", json={"exam_id": exam, "reason": 0}, headers=rad)
        r = client.post(
            "/v1/reports",
            json={
                "exam_id": exam,
                "body_text": "b",
                "impression_text": "Massive pulmonary embolism.",
            },
            headers=rad,
        )
        assert r.status_code == 201
    alerts = client.get("/v1/alerts", headers=phy).json()["alerts"]
    assert len(alerts) >= 2
    first_seq = alerts[0]["seq"]
    received = []
    with client.stream(
        "GET", "/v1/alerts/stream?once=true",
        headers={**phy, "Last-Event-ID": str(first_seq)},
    ) as stream:
        for line in stream.iter_lines():
            if line.startswith("data:"):
                received.append(json.loads(line[5:]))
                if len(received) >= len(alerts) - 1:
                    break
    got_ids = [a["alert_id"] for a in received]
    expected = [a["alert_id"] for a in alerts if a["seq"] > first_seq]
    assert got_ids == expected
    # Oracle: delivered ids match the ledger's alert history in commit order.
    led = ctx.network.peer_for_channel("telerad").store.channel("telerad")
    on_chain = []
    for block in led.blocks:
        for tx, flag in zip(block.transactions, block.validity_flags):
            if flag.name != "VALID":
                continue
            for key, _value in tx.write_set:
                if key.startswith("alert/telerad/") and tx.operation == "submit_report":
                    on_chain.append(key.rsplit("/", 1)[1])
    phy_chain = [
        a for a in on_chain
        if any(x["alert_id"] == a and x["recipient"] == "phy-001"
               for x in client.get("/v1/alerts", headers=phy).json()["alerts"])
    ]
    assert [a for a in phy_chain if a in set(expected)] == expected


def test_audit_matches_ledger_history(gw):
    ctx, client = gw
    staff = login(ctx, client, "staff-001")
    r = client.get("/v1/audit/exams/EX-1001", headers=staff)
    assert r.status_code == 200
    events = r.json()["events"]
    assert events, "audit trail must not be empty"
    positions = [(e["height"], e["tx_index"]) for e in events]
    assert positions == sorted(positions)
    # Oracle: the anchor write in get_history matches the first audit row.
    led = ctx.network.peer_for_channel("telerad").store.channel("telerad")
    history = led.get_history("exam/telerad/EX-1001")
    assert history[0].tx_id.hex() == events[0]["tx_id"]
    # Radiologists lack ReadAudit.
    rad = login(ctx, client, "rad-001")
    assert client.get("/v1/audit/exams/EX-1001", headers=rad).status_code == 403


def test_admin_register_and_login_roundtrip(gw):
    ctx, client = gw
    admin = login(ctx, client, "ca-admin")
    r = client.post(
        "/v1/admin/register",
        json={"user_id": "rad-900", "org_id": "telerad-practice", "role": "RADIOLOGIST"},
        headers=admin,
    )
    assert r.status_code == 201
    seed = r.json()["private_seed"]
    assert len(seed) == 64
    headers = login(ctx, client, "rad-900")
    assert client.get("/v1/worklist", headers=headers).status_code == 200
    # Non-admin cannot register.
    rad = login(ctx, client, "rad-001")
    r = client.post(
        "/v1/admin/register",
        json={"user_id": "x", "org_id": "hospital-a", "role": "PHYSICIAN"},
        headers=rad,
    )
    assert r.status_code == 403


def test_admin_keywords(gw):
    ctx, client = gw
    admin = login(ctx, client, "site-admin")
    r = client.post(
        "/v1/admin/keywords",
        json={"channel_id": "telerad", "keywords": ["Aortic Dissection", "acute stroke"]},
        headers=admin,
    )
    assert r.status_code == 200
    assert r.json()["version"] >= 2
    rad = login(ctx, client, "rad-001")
    r = client.post(
        "/v1/admin/keywords",
        json={"channel_id": "telerad", "keywords": ["x"]},
        headers=rad,
    )
    assert r.status_code in (403, 422)


def test_foreign_identity_sees_nothing():
    from radchain.identity import Role

    ctx = build_demo_context(seed=12)
    client = TestClient(build_app(ctx))
    net = ctx.network
    net.add_org("hospital-b", 1)
    kp, _cert = net.ca.enroll("spy-001", "hospital-b", Role.RADIOLOGIST)
    ctx.keystore.put("spy-001", kp)
    headers = login(ctx, client, "spy-001")
    worklist = client.get("/v1/worklist", headers=headers).json()["entries"]
    assert worklist == []
    assert client.get("/v1/exams/EX-1001", headers=headers).status_code == 404
    assert client.get("/v1/audit/exams/EX-1001", headers=headers).status_code == 404
    r = client.post("/v1/access-requests", json={"exam_id": "EX-1001", "reason": 0}, headers=headers)
    assert r.status_code == 404
