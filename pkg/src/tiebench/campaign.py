"""Annotation-campaign engine: rater assignment, session lifecycle, durable
persistence, and ratings export.

State is an append-only JSONL event log plus a periodic snapshot; replaying
the log reconstructs the exact pre-crash state. Every mutation validates,
appends durably (write + flush + fsync), then applies — acknowledgments are
only sent for events already on disk. All mutations of a campaign serialize
through the store lock; session assignment is greedy by largest remaining
rater count, shuffled with the campaign seed mixed with subject and session
index so reassignment is reproducible.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional, Sequence

from .dataset import (
    BenchmarkItem,
    PromptBundle,
    RatingRecord,
    rating_from_row,
    rating_to_row,
)
from .errors import (
    CampaignComplete,
    Conflict,
    DuplicateRating,
    InvalidConfig,
    NothingToAssign,
    OutOfOrderSubmission,
    SessionExpired,
    UnknownCampaign,
    UnknownItem,
    UnknownSession,
    ValidationFailure,
)

__all__ = ["CampaignConfig", "Session", "Campaign", "CampaignStore"]


@dataclass(frozen=True)
class CampaignConfig:
    """Campaign-wide assignment policy."""

    raters_per_item: int = 15
    session_item_cap: int = 120
    randomize: bool = True
    seed: int = 0
    session_expiry_minutes: float = 30.0

    def __post_init__(self):
        if self.raters_per_item < 1:
            raise InvalidConfig("raters_per_item must be >= 1")
        if self.session_item_cap < 1:
            raise InvalidConfig("session_item_cap must be >= 1")
        if self.session_expiry_minutes <= 0:
            raise InvalidConfig("session_expiry_minutes must be positive")

    def to_dict(self) -> dict:
        return {
            "raters_per_item": self.raters_per_item,
            "session_item_cap": self.session_item_cap,
            "randomize": self.randomize,
            "seed": self.seed,
            "session_expiry_minutes": self.session_expiry_minutes,
        }


@dataclass
class Session:
    """One rater's bounded, ordered batch of items."""

    session_id: str
    campaign_id: str
    subject_id: str
    index: int
    items: tuple[str, ...]
    cursor: int = 0
    state: str = "open"  # open | complete | expired
    last_activity: float = 0.0

    @property
    def current_item(self) -> Optional[str]:
        if self.state == "open" and self.cursor < len(self.items):
            return self.items[self.cursor]
        return None

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "campaign_id": self.campaign_id,
            "subject_id": self.subject_id,
            "index": self.index,
            "items": list(self.items),
            "cursor": self.cursor,
            "state": self.state,
            "last_activity": self.last_activity,
        }


@dataclass
class Campaign:
    campaign_id: str
    config: CampaignConfig
    manifest_path: str
    items: dict[str, BenchmarkItem]
    ratings: list[RatingRecord] = field(default_factory=list)
    rating_keys: set[tuple[str, str]] = field(default_factory=set)
    raters: dict[str, set[str]] = field(default_factory=dict)  # item -> subjects
    sessions: dict[str, Session] = field(default_factory=dict)
    assigned: dict[str, set[str]] = field(default_factory=dict)  # subject -> items
    session_counts: dict[str, int] = field(default_factory=dict)

    def remaining(self, item_id: str) -> int:
        return self.config.raters_per_item - len(self.raters.get(item_id, set()))

    def open_holds(self) -> dict[str, int]:
        """Unrated items currently assigned in open sessions."""
        holds: dict[str, int] = {}
        for session in self.sessions.values():
            if session.state != "open":
                continue
            for item_id in session.items[session.cursor :]:
                holds[item_id] = holds.get(item_id, 0) + 1
        return holds

    def is_complete(self) -> bool:
        return all(self.remaining(item_id) <= 0 for item_id in self.items)

    def progress(self) -> dict:
        required = self.config.raters_per_item * len(self.items)
        return {
            "campaign_id": self.campaign_id,
            "n_items": len(self.items),
            "required_ratings": required,
            "submitted_ratings": len(self.ratings),
            "remaining_by_item": {
                item_id: max(0, self.remaining(item_id))
                for item_id in sorted(self.items)
            },
            "complete": self.is_complete(),
            "n_subjects": len({r.subject_id for r in self.ratings}),
            "n_sessions": len(self.sessions),
        }


def _shuffle_seed(seed: int, subject_id: str, index: int) -> int:
    digest = hashlib.sha256(f"{seed}|{subject_id}|{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _item_to_row(item: BenchmarkItem) -> dict:
    return {
        "item_id": item.item_id,
        "source_image": item.source_image,
        "edited_image": item.edited_image,
        "editing_model": item.editing_model,
        "task": item.task,
        "instruction": item.prompts.instruction,
        "source_description": item.prompts.source_description,
        "target_description": item.prompts.target_description,
        "qa_question": item.qa_question,
    }


def _item_from_row(row: dict) -> BenchmarkItem:
    return BenchmarkItem(
        item_id=row["item_id"],
        source_image=row["source_image"],
        edited_image=row["edited_image"],
        editing_model=row["editing_model"],
        task=row["task"],
        prompts=PromptBundle(
            instruction=row["instruction"],
            source_description=row["source_description"],
            target_description=row["target_description"],
        ),
        qa_question=row["qa_question"],
    )


class CampaignStore:
    """Durable multi-campaign state backed by an event log and snapshots.

    ``clock`` is injectable for tests; event application never reads it, so
    replay is deterministic.
    """

    def __init__(
        self,
        data_dir: str | Path,
        *,
        fsync: bool = True,
        snapshot_every: int = 100,
        clock: Callable[[], float] = time.time,
    ):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._log_path = self.data_dir / "events.jsonl"
        self._snapshot_path = self.data_dir / "snapshot.json"
        self._fsync = fsync
        self._snapshot_every = max(1, snapshot_every)
        self.clock = clock
        self.campaigns: dict[str, Campaign] = {}
        self._session_owner: dict[str, str] = {}
        self._seq = 0
        self._lock = threading.RLock()
        self._replay()
        self._log_file = open(self._log_path, "a", encoding="utf-8")

    # ── persistence ──────────────────────────────────────────────────────

    def close(self) -> None:
        with self._lock:
            if not self._log_file.closed:
                self._log_file.close()

    def _append(self, event: dict) -> None:
        event["seq"] = self._seq + 1
        event["at"] = float(event.get("at", self.clock()))
        line = json.dumps(event, ensure_ascii=False)
        self._log_file.write(line + "\n")
        self._log_file.flush()
        if self._fsync:
            os.fsync(self._log_file.fileno())
        self._seq += 1
        self._apply(event)
        if self._seq % self._snapshot_every == 0:
            self._write_snapshot()

    def _replay(self) -> None:
        applied = 0
        if self._snapshot_path.exists():
            with open(self._snapshot_path, "r", encoding="utf-8") as fh:
                snapshot = json.load(fh)
            self._load_state(snapshot["state"])
            applied = int(snapshot["applied"])
            self._seq = applied
        if self._log_path.exists():
            with open(self._log_path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        event = json.loads(line)
                    except json.JSONDecodeError:
                        # torn tail write from a crash; everything before it
                        # was acknowledged and is intact
                        break
                    if event["seq"] <= applied:
                        continue
                    self._apply(event)
                    self._seq = event["seq"]

    def _write_snapshot(self) -> None:
        tmp = self._snapshot_path.with_suffix(".json.tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump({"applied": self._seq, "state": self.state_dict()}, fh)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self._snapshot_path)

    def state_dict(self) -> dict:
        """Canonical JSON-able state, used for snapshots and replay tests."""
        out: dict = {"campaigns": {}}
        for cid in sorted(self.campaigns):
            campaign = self.campaigns[cid]
            out["campaigns"][cid] = {
                "config": campaign.config.to_dict(),
                "manifest_path": campaign.manifest_path,
                "items": [
                    _item_to_row(campaign.items[i]) for i in sorted(campaign.items)
                ],
                "ratings": [rating_to_row(r) for r in campaign.ratings],
                "sessions": [
                    campaign.sessions[s].to_dict() for s in sorted(campaign.sessions)
                ],
                "session_counts": dict(sorted(campaign.session_counts.items())),
            }
        return out

    def _load_state(self, state: dict) -> None:
        for cid, blob in state["campaigns"].items():
            campaign = Campaign(
                campaign_id=cid,
                config=CampaignConfig(**blob["config"]),
                manifest_path=blob["manifest_path"],
                items={row["item_id"]: _item_from_row(row) for row in blob["items"]},
            )
            for row in blob["ratings"]:
                record = rating_from_row(row)
                campaign.ratings.append(record)
                campaign.rating_keys.add((record.subject_id, record.item_id))
                campaign.raters.setdefault(record.item_id, set()).add(record.subject_id)
            for srow in blob["sessions"]:
                session = Session(
                    session_id=srow["session_id"],
                    campaign_id=cid,
                    subject_id=srow["subject_id"],
                    index=srow["index"],
                    items=tuple(srow["items"]),
                    cursor=srow["cursor"],
                    state=srow["state"],
                    last_activity=srow["last_activity"],
                )
                campaign.sessions[session.session_id] = session
                campaign.assigned.setdefault(session.subject_id, set()).update(
                    session.items
                )
                self._session_owner[session.session_id] = cid
            campaign.session_counts = dict(blob["session_counts"])
            self.campaigns[cid] = campaign

    def _apply(self, event: dict) -> None:
        kind = event["type"]
        if kind == "campaign_created":
            config = CampaignConfig(**event["config"])
            campaign = Campaign(
                campaign_id=event["campaign_id"],
                config=config,
                manifest_path=event["manifest_path"],
                items={
                    row["item_id"]: _item_from_row(row) for row in event["items"]
                },
            )
            self.campaigns[event["campaign_id"]] = campaign
        elif kind == "session_started":
            campaign = self.campaigns[event["campaign_id"]]
            session = Session(
                session_id=event["session_id"],
                campaign_id=event["campaign_id"],
                subject_id=event["subject_id"],
                index=event["index"],
                items=tuple(event["items"]),
                last_activity=event["at"],
            )
            campaign.sessions[session.session_id] = session
            campaign.assigned.setdefault(session.subject_id, set()).update(session.items)
            campaign.session_counts[session.subject_id] = session.index + 1
            self._session_owner[session.session_id] = campaign.campaign_id
        elif kind == "rating_submitted":
            campaign = self.campaigns[event["campaign_id"]]
            session = campaign.sessions[event["session_id"]]
            record = rating_from_row(event["rating"])
            campaign.ratings.append(record)
            campaign.rating_keys.add((record.subject_id, record.item_id))
            campaign.raters.setdefault(record.item_id, set()).add(record.subject_id)
            session.cursor += 1
            session.last_activity = event["at"]
            if session.cursor >= len(session.items):
                session.state = "complete"
        elif kind == "session_expired":
            campaign = self.campaigns[event["campaign_id"]]
            campaign.sessions[event["session_id"]].state = "expired"
        else:
            raise ValidationFailure(f"unknown event type {kind!r}")

    # ── expiry ───────────────────────────────────────────────────────────

    def _sweep_expired(self, campaign: Campaign) -> None:
        now = self.clock()
        window = campaign.config.session_expiry_minutes * 60.0
        for session_id in sorted(campaign.sessions):
            session = campaign.sessions[session_id]
            if session.state == "open" and now - session.last_activity > window:
                self._append(
                    {
                        "type": "session_expired",
                        "campaign_id": campaign.campaign_id,
                        "session_id": session_id,
                    }
                )

    # ── operations ───────────────────────────────────────────────────────

    def _campaign(self, campaign_id: str) -> Campaign:
        if campaign_id not in self.campaigns:
            raise UnknownCampaign(f"no campaign {campaign_id!r}")
        return self.campaigns[campaign_id]

    def create_campaign(
        self,
        campaign_id: str,
        manifest: Sequence[BenchmarkItem],
        config: CampaignConfig,
        *,
        manifest_path: str = "",
    ) -> str:
        with self._lock:
            if campaign_id in self.campaigns:
                raise Conflict(f"campaign {campaign_id!r} already exists")
            if not manifest:
                raise InvalidConfig("campaign needs at least one item")
            self._append(
                {
                    "type": "campaign_created",
                    "campaign_id": campaign_id,
                    "config": config.to_dict(),
                    "manifest_path": manifest_path,
                    "items": [_item_to_row(item) for item in manifest],
                }
            )
            return campaign_id

    def next_session(self, campaign_id: str, subject_id: str) -> Session:
        """Open (or resume) a session for a subject.

        Greedy assignment: among items the subject has never been assigned
        and whose remaining count net of in-flight holds is positive, take up
        to the session cap with the largest remaining counts.
        """
        if not subject_id:
            raise ValidationFailure("subject_id must be non-empty")
        with self._lock:
            campaign = self._campaign(campaign_id)
            self._sweep_expired(campaign)
            for session in campaign.sessions.values():
                if session.subject_id == subject_id and session.state == "open":
                    return session
            if campaign.is_complete():
                raise CampaignComplete(f"campaign {campaign_id!r} is complete")
            holds = campaign.open_holds()
            assigned = campaign.assigned.get(subject_id, set())
            eligible = [
                item_id
                for item_id in campaign.items
                if item_id not in assigned
                and campaign.remaining(item_id) - holds.get(item_id, 0) > 0
            ]
            if not eligible:
                raise NothingToAssign(
                    f"subject {subject_id!r} has no assignable items left"
                )
            eligible.sort(key=lambda i: (-campaign.remaining(i), i))
            chosen = eligible[: campaign.config.session_item_cap]
            index = campaign.session_counts.get(subject_id, 0)
            if campaign.config.randomize:
                rng = random.Random(
                    _shuffle_seed(campaign.config.seed, subject_id, index)
                )
                rng.shuffle(chosen)
            session_id = f"{campaign_id}:{subject_id}:{index}"
            self._append(
                {
                    "type": "session_started",
                    "campaign_id": campaign_id,
                    "session_id": session_id,
                    "subject_id": subject_id,
                    "index": index,
                    "items": chosen,
                }
            )
            return campaign.sessions[session_id]

    def _session(self, session_id: str) -> tuple[Campaign, Session]:
        if session_id not in self._session_owner:
            raise UnknownSession(f"no session {session_id!r}")
        campaign = self.campaigns[self._session_owner[session_id]]
        return campaign, campaign.sessions[session_id]

    def current_item(self, session_id: str) -> dict:
        """Current item metadata plus session progress."""
        with self._lock:
            campaign, session = self._session(session_id)
            self._sweep_expired(campaign)
            if session.state == "expired":
                raise SessionExpired(f"session {session_id!r} expired")
            item_id = session.current_item
            payload = {
                "session_id": session_id,
                "subject_id": session.subject_id,
                "state": session.state,
                "answered": session.cursor,
                "total": len(session.items),
            }
            if item_id is not None:
                item = campaign.items[item_id]
                payload["item"] = {
                    "item_id": item.item_id,
                    "task": item.task,
                    "editing_model": item.editing_model,
                    "instruction": item.prompts.instruction,
                    "source_description": item.prompts.source_description,
                    "target_description": item.prompts.target_description,
                    "qa_question": item.qa_question,
                }
            return payload

    def submit_rating(self, session_id: str, row: dict) -> dict:
        """Validate, durably append, and apply one rating submission."""
        with self._lock:
            campaign, session = self._session(session_id)
            self._sweep_expired(campaign)
            if session.state == "expired":
                raise SessionExpired(f"session {session_id!r} expired")
            if session.state == "complete" or session.current_item is None:
                raise OutOfOrderSubmission(f"session {session_id!r} is complete")
            row = dict(row)
            row.setdefault("subject_id", session.subject_id)
            if row["subject_id"] != session.subject_id:
                raise ValidationFailure(
                    f"subject {row['subject_id']!r} does not own session {session_id!r}"
                )
            row.setdefault(
                "submitted_at",
                datetime.fromtimestamp(self.clock(), tz=timezone.utc).isoformat(),
            )
            record = rating_from_row(row)
            if (record.subject_id, record.item_id) in campaign.rating_keys:
                raise DuplicateRating(
                    f"subject {record.subject_id!r} already rated {record.item_id!r}"
                )
            if record.item_id != session.current_item:
                raise OutOfOrderSubmission(
                    f"expected item {session.current_item!r}, got {record.item_id!r}"
                )
            self._append(
                {
                    "type": "rating_submitted",
                    "campaign_id": campaign.campaign_id,
                    "session_id": session_id,
                    "rating": rating_to_row(record),
                }
            )
            return {
                "accepted": True,
                "session_state": session.state,
                "answered": session.cursor,
                "total": len(session.items),
            }

    def progress(self, campaign_id: str) -> dict:
        with self._lock:
            campaign = self._campaign(campaign_id)
            self._sweep_expired(campaign)
            return campaign.progress()

    def export_ratings(self, campaign_id: str) -> tuple[list[RatingRecord], bool]:
        """All persisted ratings in submission order; the flag marks partial
        (incomplete) campaigns."""
        with self._lock:
            campaign = self._campaign(campaign_id)
            return list(campaign.ratings), not campaign.is_complete()

    def export_to_file(self, campaign_id: str, path: str | Path) -> dict:
        """Write the ratings file plus a sidecar meta JSON with the partial
        marker."""
        records, partial = self.export_ratings(campaign_id)
        path = Path(path)
        with open(path, "w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(rating_to_row(record), ensure_ascii=False) + "\n")
        meta = {
            "campaign_id": campaign_id,
            "partial": partial,
            "n_ratings": len(records),
        }
        meta_path = path.with_suffix(path.suffix + ".meta.json")
        with open(meta_path, "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return meta

    def image_path(self, campaign_id: str, item_id: str, role: str) -> Path:
        """Resolve an item's image path for read-only serving."""
        campaign = self._campaign(campaign_id)
        if item_id not in campaign.items:
            raise UnknownItem(f"no item {item_id!r} in campaign {campaign_id!r}")
        item = campaign.items[item_id]
        if role == "source":
            ref = item.source_image
        elif role == "edited":
            ref = item.edited_image
        else:
            raise ValidationFailure(f"role must be source or edited, got {role!r}")
        p = Path(ref)
        if not p.is_absolute() and campaign.manifest_path:
            p = Path(campaign.manifest_path).parent / p
        return p

    def find_image(self, item_id: str, role: str) -> Path:
        """Resolve an item's image across campaigns (items are globally
        unique in practice; campaigns are scanned in sorted order)."""
        for campaign_id in sorted(self.campaigns):
            if item_id in self.campaigns[campaign_id].items:
                return self.image_path(campaign_id, item_id, role)
        raise UnknownItem(f"no item {item_id!r} in any campaign")
