// Typed client for the owner-agent HTTP API. The browser never computes or
// stores key material; everything here is plain JSON views served by the
// owner's own agent.

export interface Advert {
  advert_id: string;
  project_id: string;
  title: string;
  org_type?: string;
  plain_language_purpose: string;
  criteria: { reveals: string[]; predicates: [string, string, number][] };
  consent_terms: string;
  terms_hash: string;
  reward: { kind: string; amount: number; currency_label: string };
}

export interface TraceLine {
  name: string;
  ok: boolean;
  detail: string;
}

export interface EthicsReport {
  overall: "accept" | "reject";
  checks: TraceLine[];
}

export interface Reward {
  amount: number;
  kind: string;
  project_id: string;
}

export interface SessionView {
  session_id: string;
  state: string;
  advert: Advert;
  terms: string;
  terms_hash: string;
  ethics_report: EthicsReport | null;
  requested_attrs: string[];
  selected_attrs: string[];
  reward: Reward | null;
  abort_reason: string;
}

export interface CredentialView {
  cred_def_id: string;
  schema_id: string;
  category: string;
  attributes: { name: string; value: string }[];
  revoked: boolean;
}

export interface AgentApi {
  listProjects(orgType?: string): Promise<Advert[]>;
  listCredentials(): Promise<CredentialView[]>;
  listRewards(): Promise<CredentialView[]>;
  startSession(advertId: string): Promise<SessionView>;
  getSession(sessionId: string): Promise<SessionView>;
  approveEligibility(sessionId: string): Promise<SessionView>;
  consent(sessionId: string, selectedAttrs: string[]): Promise<SessionView>;
  abort(sessionId: string, reason: string): Promise<SessionView>;
  recoveryConfig(guardians: number, k: number): Promise<{ k: number; guardians: string[] }>;
  recoveryRestore(indices: number[]): Promise<{ restored: boolean; byte_identical: boolean }>;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class HttpAgentApi implements AgentApi {
  constructor(private base: string) {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.base + path, {
      method,
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const data = await response.json();
    if (!response.ok) {
      throw new ApiError(response.status, (data as { error?: string }).error ?? "request failed");
    }
    return data as T;
  }

  listProjects(orgType?: string): Promise<Advert[]> {
    const query = orgType ? `?org_type=${encodeURIComponent(orgType)}` : "";
    return this.call("GET", `/projects${query}`);
  }

  listCredentials(): Promise<CredentialView[]> {
    return this.call("GET", "/credentials");
  }

  listRewards(): Promise<CredentialView[]> {
    return this.call("GET", "/rewards");
  }

  startSession(advertId: string): Promise<SessionView> {
    return this.call("POST", "/sessions", { advert_id: advertId });
  }

  getSession(sessionId: string): Promise<SessionView> {
    return this.call("GET", `/sessions/${sessionId}`);
  }

  approveEligibility(sessionId: string): Promise<SessionView> {
    return this.call("POST", `/sessions/${sessionId}/eligibility-approve`);
  }

  consent(sessionId: string, selectedAttrs: string[]): Promise<SessionView> {
    return this.call("POST", `/sessions/${sessionId}/consent`, { selected_attrs: selectedAttrs });
  }

  abort(sessionId: string, reason: string): Promise<SessionView> {
    return this.call("POST", `/sessions/${sessionId}/abort`, { reason });
  }

  recoveryConfig(guardians: number, k: number): Promise<{ k: number; guardians: string[] }> {
    return this.call("POST", "/recovery/config", { guardians, k });
  }

  recoveryRestore(indices: number[]): Promise<{ restored: boolean; byte_identical: boolean }> {
    return this.call("POST", "/recovery/restore", { guardian_indices: indices });
  }
}
