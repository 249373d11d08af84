// In-memory fake of the agent API for component tests. The fixture values are
// deliberately sentinel-looking so the storage tests can prove nothing leaks.

import type {
  Advert,
  AgentApi,
  CredentialView,
  SessionView,
} from "../src/api.js";

export const SENTINEL_VALUE = "SENTINEL-LDL-VALUE-31";
export const SENTINEL_SALT = "sentinelsaltsentinelsaltsentinel";
export const SENTINEL_KEY = "sentinel-signing-key-material";

export function advertFixture(overrides: Partial<Advert> = {}): Advert {
  return {
    advert_id: "advert-0",
    project_id: "study-1",
    title: "Biomarker sharing study",
    org_type: "university",
    plain_language_purpose: "Understand biomarker distributions in volunteers.",
    criteria: { reveals: ["blood_type", "ldl"], predicates: [["ldl", ">=", 20]] },
    consent_terms: "Your selected biomarkers are used for this study only.",
    terms_hash: "ab".repeat(32),
    reward: { kind: "honorarium", amount: 50, currency_label: "CAD" },
    ...overrides,
  };
}

export function sessionFixture(state: string, overrides: Partial<SessionView> = {}): SessionView {
  return {
    session_id: "f00d",
    state,
    advert: advertFixture(),
    terms: "Your selected biomarkers are used for this study only.",
    terms_hash: "ab".repeat(32),
    ethics_report: {
      overall: "accept",
      checks: [
        { name: "nonce-freshness", ok: true, detail: "single-use nonce answered" },
        { name: "issuer-registration", ok: true, detail: "ERB anchored on ledger" },
        { name: "issuer-signature", ok: true, detail: "signature verifies" },
        { name: "predicate:expiry>=100", ok: true, detail: "certificate not expired" },
        { name: "revocation", ok: true, detail: "not revoked" },
        { name: "holder-binding", ok: true, detail: "fresh holder key" },
        { name: "certificate-project", ok: true, detail: "issued for this project" },
      ],
    },
    requested_attrs: ["blood_type", "ldl"],
    selected_attrs: [],
    reward: null,
    abort_reason: "",
    ...overrides,
  };
}

export class FakeApi implements AgentApi {
  adverts: Advert[] = [advertFixture()];
  session: SessionView | null = null;
  startState = "ETHICS_VERIFIED";
  consents: string[][] = [];

  async listProjects(orgType?: string): Promise<Advert[]> {
    return orgType ? this.adverts.filter((a) => a.org_type === orgType) : this.adverts;
  }

  async listCredentials(): Promise<CredentialView[]> {
    return [
      {
        cred_def_id: "did:omic:x:cd:did:omic:x:biomarkers:1.0",
        schema_id: "did:omic:x:biomarkers:1.0",
        category: "biomarker",
        attributes: [
          { name: "ldl", value: SENTINEL_VALUE },
          { name: "blood_type", value: "A+" },
        ],
        revoked: false,
      },
    ];
  }

  async listRewards(): Promise<CredentialView[]> {
    return [];
  }

  async startSession(): Promise<SessionView> {
    this.session = sessionFixture(this.startState);
    if (this.startState === "ABORTED") {
      this.session.abort_reason = "ethics-check-failed:predicate:expiry";
      this.session.ethics_report = {
        overall: "reject",
        checks: [
          { name: "issuer-signature", ok: true, detail: "signature verifies" },
          { name: "predicate:expiry>=400", ok: false, detail: "certificate expired" },
        ],
      };
    }
    return this.session;
  }

  async getSession(): Promise<SessionView> {
    if (!this.session) throw new Error("no session");
    return this.session;
  }

  async approveEligibility(): Promise<SessionView> {
    this.session = { ...this.session!, state: "ELIGIBILITY_PROVEN" };
    return this.session;
  }

  async consent(_id: string, attrs: string[]): Promise<SessionView> {
    this.consents.push(attrs);
    this.session = {
      ...this.session!,
      state: "REWARDED",
      selected_attrs: attrs,
      reward: { amount: 50, kind: "honorarium", project_id: "study-1" },
    };
    return this.session;
  }

  async abort(): Promise<SessionView> {
    this.session = { ...this.session!, state: "ABORTED", abort_reason: "user-abort" };
    return this.session;
  }

  async recoveryConfig(guardians: number, k: number) {
    return { k, guardians: Array.from({ length: guardians }, (_, i) => `guardian-${i}`) };
  }

  async recoveryRestore() {
    return { restored: true, byte_identical: true };
  }
}

export function waitFor(
  predicate: () => boolean,
  timeoutMs = 5000,
  label = "condition",
): Promise<void> {
  const started = Date.now();
  return new Promise((resolve, reject) => {
    const poll = () => {
      if (predicate()) return resolve();
      if (Date.now() - started > timeoutMs) {
        return reject(new Error(`timed out waiting for ${label}`));
      }
      setTimeout(poll, 10);
    };
    poll();
  });
}

export function click(root: ParentNode, selector: string): void {
  const node = root.querySelector(selector);
  if (!node) throw new Error(`nothing to click at ${selector}`);
  (node as HTMLElement).click();
}
