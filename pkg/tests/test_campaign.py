"""Campaign engine tests: assignment, ordering, durability, replay."""

from __future__ import annotations

import threading

import pytest

from conftest import build_manifest, manifest_row
from tiebench.campaign import CampaignConfig, CampaignStore
from tiebench.dataset import load_manifest, load_ratings
from tiebench.errors import (
    CampaignComplete,
    Conflict,
    DuplicateRating,
    InvalidConfig,
    NothingToAssign,
    OutOfOrderSubmission,
    SessionExpired,
    UnknownCampaign,
)

AT = "2025-06-01T10:00:00+00:00"


def items_fixture(tmp_path, n):
    rows = [manifest_row(f"i{k:02d}") for k in range(n)]
    path = build_manifest(tmp_path / "bench", rows, with_images=False)
    return load_manifest(path, check_images=False)


def make_store(tmp_path, **kw):
    kw.setdefault("fsync", False)
    return CampaignStore(tmp_path / "data", **kw)


def rating_body(item_id, score=3.0, qa=True):
    return {
        "item_id": item_id,
        "quality": score,
        "alignment": score,
        "preservation": score,
        "qa_answer": qa,
        "submitted_at": AT,
    }


def drive_to_completion(store, campaign_id, subjects, max_rounds=200):
    """Subjects keep requesting sessions and rating until nothing is left."""
    for _ in range(max_rounds):
        active = False
        for subject in subjects:
            try:
                session = store.next_session(campaign_id, subject)
            except (NothingToAssign, CampaignComplete):
                continue
            active = True
            while session.current_item is not None:
                store.submit_rating(session.session_id, rating_body(session.current_item))
        if not active:
            return
    raise AssertionError("campaign did not terminate")


class TestConfig:
    def test_invalid(self):
        with pytest.raises(InvalidConfig):
            CampaignConfig(raters_per_item=0)
        with pytest.raises(InvalidConfig):
            CampaignConfig(session_item_cap=0)


class TestCreate:
    def test_required_total(self, tmp_path):
        store = make_store(tmp_path)
        items = items_fixture(tmp_path, 10)
        store.create_campaign("c1", items, CampaignConfig(raters_per_item=3))
        progress = store.progress("c1")
        assert progress["required_ratings"] == 30
        assert progress["complete"] is False

    def test_conflict_on_same_id(self, tmp_path):
        store = make_store(tmp_path)
        items = items_fixture(tmp_path, 2)
        store.create_campaign("c1", items, CampaignConfig(raters_per_item=1))
        with pytest.raises(Conflict):
            store.create_campaign("c1", items, CampaignConfig(raters_per_item=1))

    def test_unknown_campaign(self, tmp_path):
        store = make_store(tmp_path)
        with pytest.raises(UnknownCampaign):
            store.progress("ghost")


class TestNextSession:
    def test_cap_limits_session(self, tmp_path):
        store = make_store(tmp_path)
        items = items_fixture(tmp_path, 10)
        store.create_campaign(
            "c1", items, CampaignConfig(raters_per_item=3, session_item_cap=5)
        )
        session = store.next_session("c1", "alice")
        assert len(session.items) == 5
        assert len(set(session.items)) == 5

    def test_exhausted_subject(self, tmp_path):
        store = make_store(tmp_path)
        items = items_fixture(tmp_path, 2)
        store.create_campaign(
            "c1", items, CampaignConfig(raters_per_item=3, session_item_cap=10)
        )
        session = store.next_session("c1", "alice")
        for item_id in session.items:
            store.submit_rating(session.session_id, rating_body(item_id))
        with pytest.raises(NothingToAssign):
            store.next_session("c1", "alice")

    def test_campaign_complete_error(self, tmp_path):
        store = make_store(tmp_path)
        items = items_fixture(tmp_path, 2)
        store.create_campaign(
            "c1", items, CampaignConfig(raters_per_item=1, session_item_cap=10)
        )
        session = store.next_session("c1", "alice")
        for item_id in session.items:
            store.submit_rating(session.session_id, rating_body(item_id))
        assert store.progress("c1")["complete"] is True
        with pytest.raises(CampaignComplete):
            store.next_session("c1", "bob")

    def test_greedy_coverage_two_items_three_raters(self, tmp_path):
        store = make_store(tmp_path)
        items = items_fixture(tmp_path, 2)
        store.create_campaign(
            "c1", items, CampaignConfig(raters_per_item=3, session_item_cap=6)
        )
        drive_to_completion(store, "c1", ["s1", "s2", "s3"])
        progress = store.progress("c1")
        assert progress["complete"] is True
        records, partial = store.export_ratings("c1")
        assert not partial
        per_item = {}
        for record in records:
            per_item.setdefault(record.item_id, set()).add(record.subject_id)
        assert all(len(subjects) == 3 for subjects in per_item.values())

    def test_reassignment_returns_open_session(self, tmp_path):
        store = make_store(tmp_path)
        items = items_fixture(tmp_path, 4)
        store.create_campaign("c1", items, CampaignConfig(raters_per_item=1))
        first = store.next_session("c1", "alice")
        again = store.next_session("c1", "alice")
        assert again.session_id == first.session_id

    def test_randomization_determinism(self, tmp_path):
        orders = []
        for run in range(2):
            store = CampaignStore(tmp_path / f"d{run}", fsync=False)
            items = items_fixture(tmp_path, 12)
            store.create_campaign(
                "c1", items, CampaignConfig(raters_per_item=1, seed=99,
                                            session_item_cap=12)
            )
            orders.append(store.next_session("c1", "alice").items)
            store.close()
        assert orders[0] == orders[1]

    def test_no_randomization_keeps_greedy_order(self, tmp_path):
        store = make_store(tmp_path)
        items = items_fixture(tmp_path, 5)
        store.create_campaign(
            "c1", items, CampaignConfig(raters_per_item=1, randomize=False)
        )
        session = store.next_session("c1", "alice")
        assert list(session.items) == sorted(session.items)


class TestSubmitRating:
    def test_ack_and_cursor(self, tmp_path):
        store = make_store(tmp_path)
        items = items_fixture(tmp_path, 3)
        store.create_campaign("c1", items, CampaignConfig(raters_per_item=1))
        session = store.next_session("c1", "alice")
        first = session.current_item
        ack = store.submit_rating(session.session_id, rating_body(first))
        assert ack["accepted"] is True
        assert ack["answered"] == 1
        assert session.current_item != first

    def test_resubmission_is_duplicate(self, tmp_path):
        store = make_store(tmp_path)
        items = items_fixture(tmp_path, 3)
        store.create_campaign("c1", items, CampaignConfig(raters_per_item=1))
        session = store.next_session("c1", "alice")
        first = session.current_item
        store.submit_rating(session.session_id, rating_body(first))
        before = store.state_dict()
        with pytest.raises(DuplicateRating):
            store.submit_rating(session.session_id, rating_body(first))
        assert store.state_dict() == before

    def test_out_of_order(self, tmp_path):
        store = make_store(tmp_path)
        items = items_fixture(tmp_path, 3)
        store.create_campaign("c1", items, CampaignConfig(raters_per_item=1))
        session = store.next_session("c1", "alice")
        wrong = session.items[1]
        with pytest.raises(OutOfOrderSubmission):
            store.submit_rating(session.session_id, rating_body(wrong))

    def test_expired_session_not_persisted(self, tmp_path):
        now = [1000.0]
        store = CampaignStore(tmp_path / "data", fsync=False, clock=lambda: now[0])
        items = items_fixture(tmp_path, 3)
        store.create_campaign(
            "c1", items,
            CampaignConfig(raters_per_item=1, session_expiry_minutes=30),
        )
        session = store.next_session("c1", "alice")
        now[0] += 31 * 60
        with pytest.raises(SessionExpired):
            store.submit_rating(session.session_id, rating_body(session.items[0]))
        assert store.progress("c1")["submitted_ratings"] == 0

    def test_expired_items_return_to_pool_for_others(self, tmp_path):
        now = [1000.0]
        store = CampaignStore(tmp_path / "data", fsync=False, clock=lambda: now[0])
        items = items_fixture(tmp_path, 2)
        store.create_campaign(
            "c1", items,
            CampaignConfig(raters_per_item=1, session_expiry_minutes=30),
        )
        store.next_session("c1", "alice")
        with pytest.raises(NothingToAssign):
            store.next_session("c1", "bob")  # both items held by alice
        now[0] += 31 * 60
        session = store.next_session("c1", "bob")
        assert len(session.items) == 2

    def test_score_validation_applies(self, tmp_path):
        store = make_store(tmp_path)
        items = items_fixture(tmp_path, 1)
        store.create_campaign("c1", items, CampaignConfig(raters_per_item=1))
        session = store.next_session("c1", "alice")
        body = rating_body(session.items[0], score=5.5)
        with pytest.raises(Exception, match="outside"):
            store.submit_rating(session.session_id, body)


class TestExport:
    def test_complete_export_counts(self, tmp_path):
        store = make_store(tmp_path)
        items = items_fixture(tmp_path, 2)
        store.create_campaign(
            "c1", items, CampaignConfig(raters_per_item=3, session_item_cap=6)
        )
        drive_to_completion(store, "c1", ["s1", "s2", "s3"])
        records, partial = store.export_ratings("c1")
        assert len(records) == 6
        assert partial is False

    def test_partial_marker_and_round_trip(self, tmp_path):
        store = make_store(tmp_path)
        items = items_fixture(tmp_path, 3)
        store.create_campaign("c1", items, CampaignConfig(raters_per_item=2))
        session = store.next_session("c1", "alice")
        store.submit_rating(session.session_id, rating_body(session.items[0]))
        out = tmp_path / "export.jsonl"
        meta = store.export_to_file("c1", out)
        assert meta["partial"] is True
        assert meta["n_ratings"] == 1
        loaded = load_ratings(out)
        assert loaded == store.export_ratings("c1")[0]


class TestDurability:
    def test_replay_reconstructs_state(self, tmp_path):
        data = tmp_path / "data"
        store = CampaignStore(data, fsync=False, snapshot_every=1000)
        items = items_fixture(tmp_path, 5)
        store.create_campaign(
            "c1", items, CampaignConfig(raters_per_item=2, session_item_cap=3)
        )
        session = store.next_session("c1", "alice")
        store.submit_rating(session.session_id, rating_body(session.items[0]))
        store.submit_rating(session.session_id, rating_body(session.items[1]))
        expected = store.state_dict()
        store.close()
        reborn = CampaignStore(data, fsync=False)
        assert reborn.state_dict() == expected
        # and the reborn store keeps working
        session2 = reborn.next_session("c1", "bob")
        assert session2.subject_id == "bob"
        reborn.close()

    def test_snapshot_plus_tail_replay(self, tmp_path):
        data = tmp_path / "data"
        store = CampaignStore(data, fsync=False, snapshot_every=3)
        items = items_fixture(tmp_path, 4)
        store.create_campaign(
            "c1", items, CampaignConfig(raters_per_item=1, session_item_cap=4)
        )
        session = store.next_session("c1", "alice")
        for item_id in session.items:
            store.submit_rating(session.session_id, rating_body(item_id))
        expected = store.state_dict()
        store.close()
        assert (data / "snapshot.json").exists()
        reborn = CampaignStore(data, fsync=False)
        assert reborn.state_dict() == expected
        reborn.close()

    def test_torn_tail_line_ignored(self, tmp_path):
        data = tmp_path / "data"
        store = CampaignStore(data, fsync=False, snapshot_every=1000)
        items = items_fixture(tmp_path, 2)
        store.create_campaign("c1", items, CampaignConfig(raters_per_item=1))
        session = store.next_session("c1", "alice")
        store.submit_rating(session.session_id, rating_body(session.items[0]))
        expected = store.state_dict()
        store.close()
        with open(data / "events.jsonl", "a", encoding="utf-8") as fh:
            fh.write('{"type": "rating_subm')  # crash mid-write
        reborn = CampaignStore(data, fsync=False)
        assert reborn.state_dict() == expected
        reborn.close()


class TestConcurrency:
    def test_no_duplicates_under_racing_submits(self, tmp_path):
        store = make_store(tmp_path)
        items = items_fixture(tmp_path, 1)
        store.create_campaign("c1", items, CampaignConfig(raters_per_item=1))
        session = store.next_session("c1", "alice")
        body = rating_body(session.items[0])
        outcomes = []

        def worker():
            try:
                store.submit_rating(session.session_id, body)
                outcomes.append("ok")
            except (DuplicateRating, OutOfOrderSubmission):
                outcomes.append("rejected")

        threads = [threading.Thread(target=worker) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert outcomes.count("ok") == 1
        assert store.progress("c1")["submitted_ratings"] == 1
