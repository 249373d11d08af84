"""Consent records and consent-bound data packages.

The DataPackage is the only place raw biomarker values leave the owner's
wallet: openings for exactly the consented attributes, verifiable against the
issuer-signed commitment root, bound to one purpose and one terms text. It
travels authcrypt over the session connection and nowhere else.
"""

from __future__ import annotations

import random

from omicledger import crypto
from omicledger.credentials import (
    VerificationReport,
    commitment_leaves,
    credential_public_parts,
    credential_signing_bytes,
    path_from_wire,
)
from omicledger.crypto import KeyPair, canonical_bytes, sha256

CONSENT_TAG = b"consent"
RECEIPT_TAG = b"consent-receipt"
PACKAGE_TAG = b"package"
ACK_TAG = b"transfer-ack"


def consent_signing_bytes(consent: dict) -> bytes:
    unsigned = {k: v for k, v in consent.items() if k not in ("owner_signature", "receipt")}
    return CONSENT_TAG + canonical_bytes(unsigned)


def build_consent(
    session_id: str,
    project_id: str,
    terms_hash: str,
    selected: list[str],
    owner_keys: KeyPair,
    owner_did: str,
    timestamp: int,
) -> dict:
    consent = {
        "session_id": session_id,
        "project_id": project_id,
        "terms_hash": terms_hash,
        "purpose_id": project_id,
        "selected": sorted(selected),
        "owner_did": owner_did,
        "owner_vk": owner_keys.verification_key.hex(),
        "timestamp": timestamp,
    }
    consent["owner_signature"] = crypto.sign(
        owner_keys.signing_key, consent_signing_bytes(consent)
    ).hex()
    return consent


def verify_consent(consent: dict, expected_owner_vk: str) -> bool:
    try:
        return consent["owner_vk"] == expected_owner_vk and crypto.verify(
            bytes.fromhex(consent["owner_vk"]),
            consent_signing_bytes(consent),
            bytes.fromhex(consent["owner_signature"]),
        )
    except (KeyError, ValueError):
        return False


def consent_digest(consent: dict) -> bytes:
    return sha256(consent_signing_bytes(consent))


def countersign_consent(consent: dict, researcher_keys: KeyPair) -> str:
    return crypto.sign(researcher_keys.signing_key, RECEIPT_TAG + consent_digest(consent)).hex()


def verify_countersignature(consent: dict, receipt_sig_hex: str, researcher_vk: bytes) -> bool:
    try:
        return crypto.verify(
            researcher_vk, RECEIPT_TAG + consent_digest(consent), bytes.fromhex(receipt_sig_hex)
        )
    except ValueError:
        return False


# ---------------------------------------------------------------------------
# Data package
# ---------------------------------------------------------------------------

def _package_signing_bytes(package: dict) -> bytes:
    covered = {
        "purpose_id": package["purpose_id"],
        "terms_hash": package["terms_hash"],
        "session_id": package["session_id"],
        "openings": [
            {"name": o["name"], "value": o["value"], "salt": o["salt"]}
            for o in package["openings"]
        ],
        "merkle_root": (package.get("credential") or {}).get("merkle_root", ""),
    }
    return PACKAGE_TAG + canonical_bytes(covered)


def build_data_package(
    credential: dict | None,
    selected: list[str],
    purpose_id: str,
    terms_hash: str,
    session_id: str,
    rng: random.Random,
) -> dict:
    """Open the consented attributes against the issuer-signed root."""
    openings = []
    if selected:
        if credential is None:
            raise ValueError("cannot open attributes without a credential")
        leaves = commitment_leaves(credential["attrs"])
        names = [a["name"] for a in credential["attrs"]]
        by_name = {a["name"]: a for a in credential["attrs"]}
        for name in sorted(selected):
            rec = by_name[name]
            path = crypto.merkle_prove(leaves, names.index(name))
            openings.append(
                {
                    "name": name,
                    "value": rec["value"],
                    "salt": rec["salt"],
                    "path": {
                        "leaf_index": path.leaf_index,
                        "siblings": [[s, d.hex()] for s, d in path.siblings],
                    },
                }
            )
    package = {
        "purpose_id": purpose_id,
        "terms_hash": terms_hash,
        "session_id": session_id,
        "credential": credential_public_parts(credential) if selected else None,
        "openings": openings,
    }
    binding = crypto.generate_keypair(rng.randbytes(32))
    package["binding_key"] = binding.verification_key.hex()
    package["binding_signature"] = crypto.sign(
        binding.signing_key, _package_signing_bytes(package)
    ).hex()
    return package


def verify_data_package(
    package: dict,
    expected_purpose_id: str,
    expected_terms_hash: str,
    consented_attrs: list[str],
    ledger,
) -> VerificationReport:
    """Researcher-side verification; purpose binding makes reuse under another
    purpose fail even with an otherwise intact package."""
    report = VerificationReport()
    purpose_ok = package.get("purpose_id") == expected_purpose_id
    report.add(
        "purpose-binding",
        purpose_ok,
        "package is bound to this study's purpose"
        if purpose_ok
        else f"package purpose {package.get('purpose_id')!r} is not {expected_purpose_id!r}",
    )
    terms_ok = package.get("terms_hash") == expected_terms_hash
    report.add(
        "terms-binding",
        terms_ok,
        "package cites the consented terms text" if terms_ok else "terms hash mismatch",
    )
    opened = sorted(o["name"] for o in package.get("openings", []))
    scope_ok = opened == sorted(consented_attrs)
    report.add(
        "consent-scope",
        scope_ok,
        "openings match the consented attribute set exactly"
        if scope_ok
        else f"openings {opened} differ from consent {sorted(consented_attrs)}",
    )

    credential = package.get("credential")
    if opened:
        cred_def = ledger.query_cred_def(credential["cred_def_id"]) if credential else None
        issuer_nym = ledger.query_nym(cred_def["issuer_did"]) if cred_def else None
        report.add(
            "issuer-registration",
            issuer_nym is not None,
            "issuer anchored on ledger" if issuer_nym else "issuer not anchored on ledger",
        )
        if issuer_nym is not None:
            sig_ok = crypto.verify(
                bytes.fromhex(issuer_nym["verification_key"]),
                credential_signing_bytes(
                    credential["cred_def_id"],
                    credential["revocation_handle"],
                    credential["merkle_root"],
                    credential["anchors"],
                ),
                bytes.fromhex(credential["issuer_signature"]),
            )
            report.add(
                "issuer-signature",
                sig_ok,
                "issuer signature verifies" if sig_ok else "issuer signature invalid",
            )
            for opening in package.get("openings", []):
                try:
                    leaf = crypto.commit_attribute(
                        opening["name"], opening["value"], bytes.fromhex(opening["salt"])
                    ).digest
                    ok = crypto.merkle_verify(
                        bytes.fromhex(credential["merkle_root"]),
                        leaf,
                        path_from_wire(opening["path"]),
                    )
                except (KeyError, ValueError, crypto.CryptoError):
                    ok = False
                report.add(
                    f"opening:{opening['name']}",
                    ok,
                    f"value of '{opening['name']}' matches the issuer-signed commitment"
                    if ok
                    else f"opening for '{opening['name']}' fails against the signed root",
                )
            try:
                revoked = ledger.query_revoked(
                    cred_def.get("revoc_reg_id"), credential["revocation_handle"]
                )
                report.add(
                    "revocation",
                    not revoked,
                    "credential not revoked" if not revoked else "credential was revoked",
                )
            except KeyError:
                report.add("revocation", False, "revocation registry not on ledger")

    try:
        bind_ok = crypto.verify(
            bytes.fromhex(package["binding_key"]),
            _package_signing_bytes(package),
            bytes.fromhex(package["binding_signature"]),
        )
    except (KeyError, ValueError):
        bind_ok = False
    report.add(
        "package-binding",
        bind_ok,
        "binding signature covers purpose, terms, and openings"
        if bind_ok
        else "binding signature invalid",
    )
    return report


def ack_signature(package: dict, researcher_keys: KeyPair) -> str:
    digest = sha256(canonical_bytes(package))
    return crypto.sign(researcher_keys.signing_key, ACK_TAG + digest).hex()


def verify_ack(package: dict, ack_hex: str, researcher_vk: bytes) -> bool:
    digest = sha256(canonical_bytes(package))
    try:
        return crypto.verify(researcher_vk, ACK_TAG + digest, bytes.fromhex(ack_hex))
    except ValueError:
        return False
