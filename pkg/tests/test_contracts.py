from random import Random

import pytest

from radchain.contracts import (
    AccessReason,
    AccessRequest,
    CriticalAlert,
    KeywordConfig,
    RadiologyReport,
    RequestStatus,
    alert_key,
    detect_keywords,
    exam_key,
    grant_key,
    keyword_config_key,
    normalize_keywords,
    request_key,
)
from radchain.errors import (
    AlreadyAcknowledged,
    AlreadyDecided,
    CommitFailed,
    DuplicateExam,
    EmptyImageSet,
    InvalidKeyword,
    NoAccessGrant,
    Unauthorized,
    UnknownExam,
)
from radchain.ledger import TxFlag

from conftest import CHANNEL, make_exam
from reference import naive_detect_keywords


# --- exam anchor -------------------------------------------------------------

def test_anchor_exam_committed(bundle):
    record = make_exam("EX-1", n_hashes=3)
    bundle.client("site-admin").anchor_exam(CHANNEL, record)
    entry = bundle.client("rad-001").query_state(CHANNEL, exam_key(CHANNEL, "EX-1"))
    assert entry is not None
    from radchain.contracts import ExamRecord

    stored = ExamRecord.decode(entry[0])
    assert stored.image_count == 3
    assert stored == record


def test_anchor_duplicate_rejected(bundle):
    record = make_exam("EX-1")
    bundle.client("site-admin").anchor_exam(CHANNEL, record)
    with pytest.raises(DuplicateExam):
        bundle.client("site-admin").anchor_exam(CHANNEL, record)


def test_anchor_empty_image_set(bundle):
    record = make_exam("EX-0", n_hashes=0)
    with pytest.raises(EmptyImageSet):
        bundle.client("site-admin").anchor_exam(CHANNEL, record)


def test_anchor_requires_site_admin_of_org(bundle):
    record = make_exam("EX-1")
    with pytest.raises(Unauthorized):
        bundle.client("rad-001").anchor_exam(CHANNEL, record)


# --- access requests ------------------------------------------------------------

def test_radiologist_request_committed_pending(bundle):
    bundle.client("site-admin").anchor_exam(CHANNEL, make_exam("EX-1"))
    request_id, receipt = bundle.client("rad-001").request_access(
        CHANNEL, "EX-1", AccessReason.INTERPRETATION
    )
    entry = bundle.client("rad-001").query_state(CHANNEL, request_key(CHANNEL, request_id))
    req = AccessRequest.decode(entry[0])
    assert req.status == RequestStatus.PENDING
    assert req.requester == "rad-001"
    assert receipt.flag == TxFlag.VALID


def test_non_referring_physician_rejected(bundle):
    from radchain.identity import Role

    bundle.client("site-admin").anchor_exam(CHANNEL, make_exam("EX-1", physician="phy-001"))
    kp, _ = bundle.net.ca.enroll("phy-003", "hospital-a", Role.PHYSICIAN)
    other = bundle.net.client("phy-003", kp)
    # Oracle: role matrix admits physicians only via the referring check.
    exam_entry = other.query_state(CHANNEL, exam_key(CHANNEL, "EX-1"))
    from radchain.contracts import ExamRecord

    assert ExamRecord.decode(exam_entry[0]).referring_physician != "phy-003"
    with pytest.raises(Unauthorized):
        other.request_access(CHANNEL, "EX-1", AccessReason.PRIOR_COMPARISON)


def test_referring_physician_allowed(bundle):
    bundle.client("site-admin").anchor_exam(CHANNEL, make_exam("EX-1", physician="phy-001"))
    request_id, _ = bundle.client("phy-001").request_access(
        CHANNEL, "EX-1", AccessReason.PRIOR_COMPARISON
    )
    bundle.client("gw-svc").evaluate_access(CHANNEL, request_id)
    entry = bundle.client("phy-001").query_state(CHANNEL, request_key(CHANNEL, request_id))
    assert AccessRequest.decode(entry[0]).status == RequestStatus.GRANTED


def test_request_unknown_exam(bundle):
    with pytest.raises(UnknownExam):
        bundle.client("rad-001").request_access(CHANNEL, "EX-404", AccessReason.INTERPRETATION)


# --- evaluation ---------------------------------------------------------------------

def _granted_request(bundle, exam="EX-1", user="rad-001"):
    bundle.client("site-admin").anchor_exam(CHANNEL, make_exam(exam))
    request_id, _ = bundle.client(user).request_access(CHANNEL, exam, AccessReason.INTERPRETATION)
    bundle.client("gw-svc").evaluate_access(CHANNEL, request_id)
    return request_id


def test_evaluate_grants_valid_radiologist(bundle):
    request_id = _granted_request(bundle)
    entry = bundle.client("rad-001").query_state(CHANNEL, request_key(CHANNEL, request_id))
    req = AccessRequest.decode(entry[0])
    assert req.status == RequestStatus.GRANTED
    assert bundle.client("rad-001").query_state(
        CHANNEL, grant_key(CHANNEL, "EX-1", "rad-001")
    ) is not None


def test_evaluate_after_revocation_denies(bundle):
    bundle.client("site-admin").anchor_exam(CHANNEL, make_exam("EX-1"))
    request_id, _ = bundle.client("rad-001").request_access(
        CHANNEL, "EX-1", AccessReason.INTERPRETATION
    )
    ca = bundle.net.ca
    ca.revoke(ca.root_revoke_sig("rad-001"), "rad-001")
    # Oracle: re-running authorize at evaluation state denies the requester.
    assert not ca.authorize("rad-001", None, CHANNEL)
    bundle.client("gw-svc").evaluate_access(CHANNEL, request_id)
    entry = bundle.client("gw-svc").query_state(CHANNEL, request_key(CHANNEL, request_id))
    req = AccessRequest.decode(entry[0])
    assert req.status == RequestStatus.DENIED
    assert bundle.client("gw-svc").query_state(
        CHANNEL, grant_key(CHANNEL, "EX-1", "rad-001")
    ) is None


def test_evaluate_twice_already_decided(bundle):
    request_id = _granted_request(bundle)
    with pytest.raises(AlreadyDecided):
        bundle.client("gw-svc").evaluate_access(CHANNEL, request_id)


# --- keyword detection ----------------------------------------------------------------

def test_paper_example_detection():
    text = "Findings consistent with acute intracranial hemorrhage, no midline shift."
    matched = detect_keywords(text, "", {"intracranial hemorrhage", "pulmonary embolism"})
    assert matched == ["intracranial hemorrhage"]


def test_empty_keyword_set():
    assert detect_keywords("anything at all", "more text", set()) == []


def test_word_boundary_rules():
    keywords = {"stroke", "pe"}
    assert detect_keywords("keystrokes logged", "", keywords) == []
    assert detect_keywords("possible stroke.", "", keywords) == ["stroke"]
    assert detect_keywords("open the door", "", keywords) == []
    assert detect_keywords("r/o PE today", "", keywords) == ["pe"]
    assert detect_keywords("hyphen-pe-joined", "", keywords) == ["pe"]


def test_negation_still_matches():
    # Documented limitation: literal matching, no negation handling.
    assert detect_keywords("no evidence of pulmonary embolism", "", {"pulmonary embolism"}) == [
        "pulmonary embolism"
    ]


def test_multiword_and_case():
    assert detect_keywords("ACUTE Intracranial  Hemorrhage", "", {"intracranial hemorrhage"}) == []
    assert detect_keywords("Intracranial Hemorrhage seen", "", {"intracranial hemorrhage"}) == [
        "intracranial hemorrhage"
    ]


def test_detection_matches_naive_oracle_randomized():
    rng = Random(42)
    vocab = ["stroke", "acute", "pe", "hemorrhage", "intracranial", "embolism", "no", "mid-line"]
    for _ in range(1500):
        words = [rng.choice(vocab) for _ in range(rng.randint(0, 12))]
        text = ""
        for w in words:
            text += w + rng.choice([" ", ", ", ". ", "-", "", "7"])
        keywords = {
            " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 2)))
            for _ in range(rng.randint(0, 4))
        }
        body = " ".join(rng.choice(vocab) for _ in range(rng.randint(0, 6)))
        assert detect_keywords(text, body, keywords) == naive_detect_keywords(text, body, keywords)


def test_normalize_keywords():
    assert normalize_keywords(["  Intracranial Hemorrhage "]) == ("intracranial hemorrhage",)
    with pytest.raises(InvalidKeyword):
        normalize_keywords([""])
    with pytest.raises(InvalidKeyword):
        normalize_keywords(["bad;keyword"])


# --- reports and alerts ------------------------------------------------------------------

def _setup_report_path(bundle, exam="EX-1", physician="phy-001"):
    bundle.client("site-admin").configure_keywords(
        CHANNEL, ["intracranial hemorrhage", "pulmonary embolism"]
    )
    bundle.client("site-admin").anchor_exam(CHANNEL, make_exam(exam, physician=physician))
    request_id, _ = bundle.client("rad-001").request_access(
        CHANNEL, exam, AccessReason.INTERPRETATION
    )
    bundle.client("gw-svc").evaluate_access(CHANNEL, request_id)


def test_critical_report_emits_alert_atomically(bundle):
    _setup_report_path(bundle)
    report_id, receipt = bundle.client("rad-001").submit_report(
        CHANNEL, "EX-1", "CT head without contrast.", "Acute pulmonary embolism."
    )
    led = bundle.net.peer_for_channel(CHANNEL).store.channel(CHANNEL)
    entry = led.query_state(f"report/{CHANNEL}/{report_id}")
    report = RadiologyReport.decode(entry[0])
    assert report.is_critical and report.matched_keywords == ("pulmonary embolism",)
    # The alert write sits in the same transaction as the report write.
    height, index, flag = led.find_tx(receipt.tx_id)
    tx = led.blocks[height].transactions[index]
    alert_writes = [k for k, _ in tx.write_set if k.startswith(f"alert/{CHANNEL}/")]
    assert len(alert_writes) == 1
    alert = CriticalAlert.decode(led.query_state(alert_writes[0])[0])
    assert alert.recipient == "phy-001"
    assert alert.report_id == report_id
    assert not alert.acknowledged


def test_benign_report_no_alert(bundle):
    _setup_report_path(bundle)
    report_id, receipt = bundle.client("rad-001").submit_report(
        CHANNEL, "EX-1", "CT head.", "No acute abnormality."
    )
    led = bundle.net.peer_for_channel(CHANNEL).store.channel(CHANNEL)
    report = RadiologyReport.decode(led.query_state(f"report/{CHANNEL}/{report_id}")[0])
    assert not report.is_critical
    assert led.keys_with_prefix(f"alert/{CHANNEL}/") == []


def test_report_without_grant_rejected(bundle):
    bundle.client("site-admin").anchor_exam(CHANNEL, make_exam("EX-1"))
    led = bundle.net.peer_for_channel(CHANNEL).store.channel(CHANNEL)
    # Oracle: no grant key in world state for this (exam, user).
    assert led.query_state(grant_key(CHANNEL, "EX-1", "rad-001")) is None
    with pytest.raises(NoAccessGrant):
        bundle.client("rad-001").submit_report(CHANNEL, "EX-1", "b", "i")


def test_acknowledge_alert_flow(bundle):
    _setup_report_path(bundle)
    _, receipt = bundle.client("rad-001").submit_report(
        CHANNEL, "EX-1", "body", "Massive intracranial hemorrhage."
    )
    led = bundle.net.peer_for_channel(CHANNEL).store.channel(CHANNEL)
    alert_id = led.keys_with_prefix(f"alert/{CHANNEL}/")[0].rsplit("/", 1)[1]
    with pytest.raises(Unauthorized):
        bundle.client("rad-001").acknowledge_alert(CHANNEL, alert_id)
    bundle.client("phy-001").acknowledge_alert(CHANNEL, alert_id)
    alert = CriticalAlert.decode(led.query_state(alert_key(CHANNEL, alert_id))[0])
    assert alert.acknowledged and alert.acknowledged_at is not None
    with pytest.raises(AlreadyAcknowledged):
        bundle.client("phy-001").acknowledge_alert(CHANNEL, alert_id)


# --- keyword configuration -----------------------------------------------------------------

def test_configure_keywords_normalized_and_versioned(bundle):
    bundle.client("site-admin").configure_keywords(CHANNEL, ["Intracranial Hemorrhage"])
    led = bundle.net.peer_for_channel(CHANNEL).store.channel(CHANNEL)
    cfg = KeywordConfig.decode(led.query_state(keyword_config_key(CHANNEL))[0])
    assert cfg.keywords == ("intracranial hemorrhage",)
    assert cfg.version == 1


def test_configure_rejects_bad_keywords(bundle):
    with pytest.raises(InvalidKeyword):
        bundle.client("site-admin").configure_keywords(CHANNEL, [""])
    with pytest.raises(Unauthorized):
        bundle.client("rad-001").configure_keywords(CHANNEL, ["stroke"])


def test_sequential_configs_in_history(bundle):
    bundle.client("site-admin").configure_keywords(CHANNEL, ["stroke"])
    bundle.client("site-admin").configure_keywords(CHANNEL, ["stroke", "pulmonary embolism"])
    history = bundle.net.peer_for_channel(CHANNEL).store.get_history(
        CHANNEL, keyword_config_key(CHANNEL)
    )
    versions = [KeywordConfig.decode(h.value).version for h in history]
    assert versions == [1, 2]


# --- state machine safety ----------------------------------------------------------------------

def test_request_and_alert_state_machines_exhaustive(bundle):
    """Enumerates every operation order over a small instance; no sequence may
    reach an AccessRequest or CriticalAlert that violates its transition rules."""
    _setup_report_path(bundle, exam="EX-9")
    report_id, _ = bundle.client("rad-001").submit_report(
        CHANNEL, "EX-9", "b", "Acute pulmonary embolism."
    )
    led = bundle.net.peer_for_channel(CHANNEL).store.channel(CHANNEL)
    alert_id = led.keys_with_prefix(f"alert/{CHANNEL}/")[0].rsplit("/", 1)[1]

    operations = [
        ("evaluate", lambda rid: bundle.client("gw-svc").evaluate_access(CHANNEL, rid)),
        ("ack", lambda _rid: bundle.client("phy-001").acknowledge_alert(CHANNEL, alert_id)),
    ]
    import itertools

    for sequence in itertools.product(range(2), repeat=4):
        request_id, _ = bundle.client("rad-001").request_access(
            CHANNEL, "EX-9", AccessReason.INTERPRETATION
        )
        decided = False
        for op_index in sequence:
            name, fn = operations[op_index]
            try:
                fn(request_id)
                if name == "evaluate":
                    assert not decided, "terminal request state must be final"
                    decided = True
            except (AlreadyDecided, AlreadyAcknowledged):
                pass
        req = AccessRequest.decode(led.query_state(request_key(CHANNEL, request_id))[0])
        assert req.status in (RequestStatus.PENDING, RequestStatus.GRANTED, RequestStatus.DENIED)
        if decided:
            assert req.status != RequestStatus.PENDING
        alert = CriticalAlert.decode(led.query_state(alert_key(CHANNEL, alert_id))[0])
        assert alert.acknowledged in (True, False)
        if alert.acknowledged:
            assert alert.acknowledged_at is not None


def test_contract_determinism_identical_write_sets(bundle):
    from radchain.contracts import ContractProcessor, StateView
    from radchain.ledger import ContractType, TxDraft

    bundle.client("site-admin").anchor_exam(CHANNEL, make_exam("EX-1"))
    draft = TxDraft(
        CHANNEL, ContractType.ACCESS, "request_access",
        (b"EX-1", bytes([0]), b"\x01" * 8), "rad-001", 1_700_000_000,
    )
    peer = bundle.net.peer_for_channel(CHANNEL)
    processor = ContractProcessor(peer.store.directory)
    view1 = StateView(peer.store.channel(CHANNEL))
    view2 = StateView(peer.store.channel(CHANNEL))
    processor.execute(draft, view1)
    processor.execute(draft, view2)
    assert view1.write_set() == view2.write_set()
    assert view1.read_set() == view2.read_set()
