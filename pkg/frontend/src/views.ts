// DOM builders. Everything renders from API data; nothing here touches
// storage or key material.

import type { Advert, CredentialView, EthicsReport, SessionView } from "./api.js";
import {
  WIZARD_STEPS,
  WizardState,
  aborted,
  ethicsAccepted,
  unlockedSteps,
} from "./wizard.js";

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

// ---------------------------------------------------------------------------
// project browser
// ---------------------------------------------------------------------------

export interface BrowserHandlers {
  onConnect(advert: Advert): void;
  onFilter(orgType: string): void;
}

export function renderProjectCard(advert: Advert, handlers: BrowserHandlers): HTMLElement {
  const card = el("article", { class: "project-card", "data-advert": advert.advert_id });
  const missingOrg = !advert.org_type;
  // requester type and purpose come before any action is offered
  card.append(
    el("span", {
      class: `org-badge org-${advert.org_type ?? "unknown"}`,
      "data-role": "org-type",
    }, [missingOrg ? "organization type missing" : advert.org_type!]),
    el("h3", {}, [advert.title]),
    el("p", { class: "purpose", "data-role": "purpose" }, [advert.plain_language_purpose]),
    el("p", { class: "reward-line" }, [
      `Honorarium: ${advert.reward.amount} ${advert.reward.currency_label}`,
    ]),
  );
  if (missingOrg) {
    card.append(
      el("p", { class: "warning", "data-role": "org-warning" }, [
        "This advert does not declare who is requesting access; connecting is disabled.",
      ]),
    );
  }
  const connect = el("button", { class: "connect", "data-role": "connect" }, [
    "Read terms & connect",
  ]) as HTMLButtonElement;
  connect.disabled = missingOrg;
  connect.addEventListener("click", () => handlers.onConnect(advert));
  card.append(connect);
  return card;
}

export function renderProjectBrowser(
  adverts: Advert[],
  filter: string,
  handlers: BrowserHandlers,
): HTMLElement {
  const root = el("section", { class: "project-browser", "data-view": "projects" });
  const select = el("select", { "data-role": "org-filter" }) as HTMLSelectElement;
  for (const value of ["", "university", "government", "pharma", "insurer", "other"]) {
    const option = el("option", { value }, [value || "all organization types"]);
    select.append(option);
  }
  select.value = filter;
  select.addEventListener("change", () => handlers.onFilter(select.value));
  root.append(el("label", {}, ["Show studies from ", select]));

  const shown = filter ? adverts.filter((a) => a.org_type === filter) : adverts;
  if (shown.length === 0) {
    root.append(
      el("p", { class: "empty-state", "data-role": "empty" }, [
        "No research projects on the board right now.",
      ]),
    );
    return root;
  }
  for (const advert of shown) {
    root.append(renderProjectCard(advert, handlers));
  }
  return root;
}

// ---------------------------------------------------------------------------
// verification trace (the anti-black-box view)
// ---------------------------------------------------------------------------

export function renderTrace(report: EthicsReport): HTMLElement {
  const list = el("ul", { class: "trace", "data-role": "ethics-trace" });
  for (const check of report.checks) {
    list.append(
      el("li", { class: check.ok ? "trace-line ok" : "trace-line failed" }, [
        el("span", { class: "icon" }, [check.ok ? "✓" : "✗"]),
        el("span", { class: "name" }, [check.name]),
        el("span", { class: "detail" }, [check.detail]),
      ]),
    );
  }
  return list;
}

// ---------------------------------------------------------------------------
// handshake wizard
// ---------------------------------------------------------------------------

export interface WizardHandlers {
  onAcknowledgeTerms(): void;
  onAcknowledgeEthics(): void;
  onApproveEligibility(): void;
  onToggleAttr(attr: string): void;
  onCommitSelection(): void;
  onConfirm(): void;
  onExit(): void;
}

export function renderWizard(state: WizardState, handlers: WizardHandlers): HTMLElement {
  const root = el("section", { class: "wizard", "data-view": "wizard" });
  const session = state.session;
  if (!session) return root;

  const unlocked = unlockedSteps(state);
  root.append(renderStepRail(unlocked));

  if (aborted(state)) {
    root.append(renderAbort(session, handlers));
    // a halted wizard still shows the steps reached so far (e.g. the failing
    // ethics trace stays visible below the abort notice)
  }

  // Only steps the user has unlocked are mounted at all.
  if (unlocked >= 1) root.append(renderTermsStep(state, handlers));
  if (unlocked >= 2) root.append(renderEthicsStep(state, handlers));
  if (unlocked >= 3 && !aborted(state)) root.append(renderEligibilityStep(state, handlers));
  if (unlocked >= 4 && !aborted(state)) root.append(renderSelectStep(state, handlers));
  if (unlocked >= 5 && !aborted(state)) root.append(renderConfirmStep(state, handlers));
  if (unlocked >= 6) root.append(renderRewardStep(session));

  if (state.error) {
    root.append(el("p", { class: "error", "data-role": "wizard-error" }, [state.error]));
  }
  return root;
}

function renderStepRail(unlocked: number): HTMLElement {
  const rail = el("ol", { class: "step-rail", "data-role": "step-rail" });
  WIZARD_STEPS.forEach((step, index) => {
    rail.append(
      el("li", {
        class: index < unlocked ? "rail-step reached" : "rail-step locked",
        "data-step-label": step,
      }, [step]),
    );
  });
  return rail;
}

function renderAbort(session: SessionView, handlers: WizardHandlers): HTMLElement {
  const box = el("div", { class: "abort-box", "data-step": "aborted" }, [
    el("h3", {}, ["Session ended"]),
    el("p", { "data-role": "abort-reason" }, [
      `This handshake stopped: ${session.abort_reason || "aborted"}. ` +
        "Nothing was shared beyond what you already approved.",
    ]),
  ]);
  const exit = el("button", { "data-role": "safe-exit" }, ["Back to studies"]);
  exit.addEventListener("click", () => handlers.onExit());
  box.append(exit);
  return box;
}

function renderTermsStep(state: WizardState, handlers: WizardHandlers): HTMLElement {
  const session = state.session!;
  const step = el("div", { class: "step", "data-step": "terms" }, [
    el("h3", {}, ["Step 1 — Consent terms"]),
    el("p", { class: "who" }, [
      `Requested by a ${session.advert.org_type} project: ${session.advert.title}`,
    ]),
    el("blockquote", { class: "terms-text", "data-role": "terms-text" }, [session.terms]),
    el("p", { class: "hint" }, [
      "Read these first. Nothing continues until you acknowledge them.",
    ]),
  ]);
  if (!state.termsAcknowledged) {
    const ack = el("button", { "data-role": "ack-terms" }, ["I have read the terms"]);
    ack.addEventListener("click", () => handlers.onAcknowledgeTerms());
    step.append(ack);
  } else {
    step.append(el("p", { class: "done" }, ["Terms acknowledged."]));
  }
  return step;
}

function renderEthicsStep(state: WizardState, handlers: WizardHandlers): HTMLElement {
  const report = state.session!.ethics_report;
  const step = el("div", { class: "step", "data-step": "ethics" }, [
    el("h3", {}, ["Step 2 — Ethics approval check"]),
    el("p", { class: "hint" }, [
      "Your agent verified the researcher's ethics certificate. Every check and its result:",
    ]),
  ]);
  if (report) {
    step.append(renderTrace(report));
    step.append(
      el("p", { "data-role": "ethics-overall", class: report.overall }, [
        report.overall === "accept"
          ? "All checks passed."
          : "A check failed — this study cannot proceed.",
      ]),
    );
  } else {
    step.append(el("p", { "data-role": "ethics-overall" }, ["No ethics result available."]));
  }
  if (ethicsAccepted(state) && !state.ethicsAcknowledged) {
    const ack = el("button", { "data-role": "ack-ethics" }, ["Continue"]);
    ack.addEventListener("click", () => handlers.onAcknowledgeEthics());
    step.append(ack);
  }
  return step;
}

function renderEligibilityStep(state: WizardState, handlers: WizardHandlers): HTMLElement {
  const session = state.session!;
  const predicates = session.advert.criteria.predicates
    .map(([attr, op, threshold]) => `${attr} ${op} ${threshold}`)
    .join(", ");
  const step = el("div", { class: "step", "data-step": "eligibility" }, [
    el("h3", {}, ["Step 3 — Prove eligibility"]),
    el("p", {}, [
      `The study asks you to prove: ${predicates || "credential possession only"}. ` +
        "Only the yes/no answer leaves your wallet — never the values.",
    ]),
  ]);
  if (session.state === "ETHICS_VERIFIED") {
    const approve = el("button", { "data-role": "approve-eligibility" }, [
      "Prove it without revealing my values",
    ]) as HTMLButtonElement;
    approve.disabled = state.busy;
    approve.addEventListener("click", () => handlers.onApproveEligibility());
    step.append(approve);
  } else {
    step.append(el("p", { class: "done" }, ["Eligibility proven."]));
  }
  return step;
}

function renderSelectStep(state: WizardState, handlers: WizardHandlers): HTMLElement {
  const session = state.session!;
  const step = el("div", { class: "step", "data-step": "select" }, [
    el("h3", {}, ["Step 4 — Choose what to share"]),
    el("p", { class: "hint" }, [
      "Everything starts OFF. Share exactly as much as you are comfortable with — " +
        "an empty selection is allowed.",
    ]),
  ]);
  for (const attr of session.requested_attrs) {
    const checkbox = el("input", {
      type: "checkbox",
      "data-attr": attr,
    }) as HTMLInputElement;
    checkbox.checked = state.selection.includes(attr);
    checkbox.addEventListener("change", () => handlers.onToggleAttr(attr));
    step.append(el("label", { class: "attr-toggle" }, [checkbox, ` ${attr}`]));
  }
  const next = el("button", { "data-role": "commit-selection" }, ["Continue"]);
  next.addEventListener("click", () => handlers.onCommitSelection());
  step.append(next);
  return step;
}

function renderConfirmStep(state: WizardState, handlers: WizardHandlers): HTMLElement {
  const session = state.session!;
  const chosen = state.selection.length
    ? state.selection.join(", ")
    : "nothing (participation only)";
  const step = el("div", { class: "step", "data-step": "confirm" }, [
    el("h3", {}, ["Step 5 — Confirm"]),
    el("p", { "data-role": "confirm-summary" }, [
      `You will share: ${chosen}. Purpose: ${session.advert.project_id}. ` +
        `Reward on completion: ${session.advert.reward.amount} ${session.advert.reward.currency_label}.`,
    ]),
  ]);
  if (session.state !== "REWARDED") {
    const confirm = el("button", { "data-role": "confirm" }, [
      "Consent and share",
    ]) as HTMLButtonElement;
    confirm.disabled = state.busy;
    confirm.addEventListener("click", () => handlers.onConfirm());
    step.append(confirm);
  }
  return step;
}

function renderRewardStep(session: SessionView): HTMLElement {
  return el("div", { class: "step", "data-step": "reward" }, [
    el("h3", {}, ["Step 6 — Reward"]),
    el("p", { "data-role": "reward-amount" }, [
      session.reward
        ? `Thank you for participating. Your ${session.reward.kind} of ` +
          `${session.reward.amount} is in your wallet.`
        : "No reward recorded.",
    ]),
  ]);
}

// ---------------------------------------------------------------------------
// credentials / rewards / recovery
// ---------------------------------------------------------------------------

export function renderCredentialList(
  creds: CredentialView[],
  kind: "credentials" | "rewards",
): HTMLElement {
  const root = el("section", { class: "credential-list", "data-view": kind });
  root.append(el("h3", {}, [kind === "credentials" ? "Your health credentials" : "Your rewards"]));
  if (creds.length === 0) {
    root.append(
      el("p", { class: "empty-state", "data-role": "empty" }, [
        kind === "credentials" ? "No credentials yet." : "No rewards yet.",
      ]),
    );
    return root;
  }
  for (const cred of creds) {
    const card = el("article", { class: "credential-card" });
    card.append(el("h4", {}, [cred.schema_id.split(":").slice(-2).join(" v")]));
    if (cred.revoked) {
      card.append(el("span", { class: "revoked-badge", "data-role": "revoked" }, ["revoked"]));
    }
    const dl = el("dl", {});
    for (const attr of cred.attributes) {
      dl.append(el("dt", {}, [attr.name]), el("dd", {}, [attr.value]));
    }
    card.append(dl);
    root.append(card);
  }
  return root;
}

export interface RecoveryHandlers {
  onConfigure(guardians: number, k: number): void;
  onRestore(indices: number[]): void;
}

export function renderRecovery(status: string, handlers: RecoveryHandlers): HTMLElement {
  const root = el("section", { class: "recovery", "data-view": "recovery" }, [
    el("h3", {}, ["Guardian recovery"]),
    el("p", { class: "hint" }, [
      "Share the power to restore this wallet with people you trust. " +
        "Any k of them together can help you back in; fewer cannot.",
    ]),
  ]);
  const guardians = el("input", {
    type: "number", value: "3", min: "1", max: "16", "data-role": "guardian-count",
  }) as HTMLInputElement;
  const threshold = el("input", {
    type: "number", value: "2", min: "1", max: "16", "data-role": "threshold",
  }) as HTMLInputElement;
  const configure = el("button", { "data-role": "configure-recovery" }, ["Distribute shares"]);
  const error = el("p", { class: "error", "data-role": "recovery-error" });
  configure.addEventListener("click", () => {
    const n = parseInt(guardians.value, 10);
    const k = parseInt(threshold.value, 10);
    if (!Number.isFinite(n) || !Number.isFinite(k) || k < 1 || k > n) {
      error.textContent = `threshold k=${threshold.value} must be between 1 and the ` +
        `number of guardians (${guardians.value})`;
      return;
    }
    error.textContent = "";
    handlers.onConfigure(n, k);
  });
  const restore = el("button", { "data-role": "restore" }, ["Test restore (first 2 guardians)"]);
  restore.addEventListener("click", () => handlers.onRestore([0, 1]));
  root.append(
    el("label", {}, ["Guardians ", guardians]),
    el("label", {}, ["Needed to restore ", threshold]),
    configure,
    restore,
    el("p", { "data-role": "recovery-status" }, [status]),
    error,
  );
  return root;
}

export function renderOfflineBanner(): HTMLElement {
  return el("div", { class: "offline-banner", "data-role": "offline" }, [
    "Your agent is unreachable. Start it with: omicledger serve --role owner",
  ]);
}
