"""Append-only bulletin board for research-project adverts.

Adverts are NOT ledger transactions — the ledger holds only the four public
identity artifact kinds. The board gatekeeps publication behind a verified,
unexpired ethics-certificate presentation and lets data owners browse by
requesting organization type before any connection happens.
"""

from __future__ import annotations

import json
import random
from typing import Callable, Optional

from omicledger.credentials import verify_presentation
from omicledger.exchange.models import ORG_TYPES, criteria_hash


class BoardError(Exception):
    """Publication rejected or unknown advert."""


ETHICS_REVEALS = ["project_id", "org_type", "approved_attrs", "reward_cap"]


def ethics_request_items(ethics_cred_def_id: str, today: int) -> list[dict]:
    """Reveal the certificate facts, prove expiry >= today without revealing it."""
    return [
        {
            "cred_def_id": ethics_cred_def_id,
            "reveal": list(ETHICS_REVEALS),
            "predicates": [["expiry", ">=", today]],
        }
    ]


def cross_check_ethics(report, presentation: dict, advert: dict) -> None:
    """Append advert-vs-certificate consistency lines to an ethics report."""
    revealed = {}
    for entry in presentation.get("credentials", []):
        for rec in entry.get("revealed", []):
            revealed[rec["name"]] = rec["value"]
    report.add(
        "certificate-project",
        revealed.get("project_id") == advert["project_id"],
        "certificate was issued for this project"
        if revealed.get("project_id") == advert["project_id"]
        else f"certificate names project {revealed.get('project_id')!r}, advert says {advert['project_id']!r}",
    )
    report.add(
        "certificate-org-type",
        revealed.get("org_type") == advert["org_type"],
        "requester organization type matches the certificate"
        if revealed.get("org_type") == advert["org_type"]
        else "advertised organization type differs from the certificate",
    )
    expected = criteria_hash(advert.get("criteria", {}))
    report.add(
        "certificate-approved-attrs",
        revealed.get("approved_attrs") == expected,
        "ethics approval covers exactly the advertised criteria"
        if revealed.get("approved_attrs") == expected
        else "advertised criteria differ from the ethics-approved set",
    )
    cap = revealed.get("reward_cap")
    amount = int(advert.get("reward", {}).get("amount", 0))
    cap_ok = cap is not None and amount <= int(cap)
    report.add(
        "reward-within-cap",
        cap_ok,
        f"advertised reward {amount} is within the approved cap {cap}"
        if cap_ok
        else f"advertised reward {amount} exceeds the approved cap {cap}",
    )


class BulletinBoard:
    """Simple append-only advert store with logical timestamps."""

    def __init__(self, ledger_view: Callable[[], object], rng: random.Random,
                 clock: Callable[[], int] = lambda: 0, today: Callable[[], int] = lambda: 0) -> None:
        self.ledger_view = ledger_view
        self.rng = rng
        self.clock = clock
        self.today = today
        self.adverts: list[dict] = []
        self._invitation_factories: dict[str, Callable[[], dict]] = {}
        self._used_nonces: set[str] = set()

    def publication_request(self, project_advert: dict) -> dict:
        if not project_advert.get("ethics_cred_def_id"):
            raise BoardError("publication requires an ethics certificate")
        return {
            "nonce": self.rng.randbytes(16).hex(),
            "requested": ethics_request_items(project_advert["ethics_cred_def_id"], self.today()),
            "purpose_id": f"board-publication:{project_advert['project_id']}",
        }

    def publish(
        self,
        project_advert: dict,
        presentation: dict,
        request: dict,
        invitation_factory: Callable[[], dict],
    ) -> str:
        """Append an advert after verifying the ethics presentation."""
        if project_advert.get("org_type") not in ORG_TYPES:
            raise BoardError(f"org_type is mandatory; got {project_advert.get('org_type')!r}")
        nonce = request.get("nonce", "")
        fresh = nonce not in self._used_nonces
        self._used_nonces.add(nonce)
        report = verify_presentation(presentation, request, self.ledger_view(), nonce_fresh=fresh)
        cross_check_ethics(report, presentation, project_advert)
        if not report.accepted:
            failure = report.first_failure()
            raise BoardError(f"publication rejected: {failure['name']}: {failure['detail']}")
        advert_id = f"advert-{len(self.adverts)}"
        self.adverts.append(
            {
                "advert_id": advert_id,
                "published_at": self.clock(),
                **project_advert,
            }
        )
        self._invitation_factories[advert_id] = invitation_factory
        return advert_id

    def discover(self, org_type: Optional[str] = None) -> list[dict]:
        return [a for a in self.adverts if org_type is None or a["org_type"] == org_type]

    def advert(self, advert_id: str) -> dict:
        for a in self.adverts:
            if a["advert_id"] == advert_id:
                return a
        raise BoardError(f"unknown advert {advert_id}")

    def connection_invitation(self, advert_id: str) -> dict:
        factory = self._invitation_factories.get(advert_id)
        if factory is None:
            raise BoardError(f"unknown advert {advert_id}")
        return factory()

    def dump(self) -> str:
        """Line-delimited JSON of every advert (input to the privacy scans)."""
        return "".join(json.dumps(a, sort_keys=True) + "\n" for a in self.adverts)
