// Pure wizard state machine. Step n+1 is mountable only once step n is
// acknowledged — the terms always gate everything else, matching the agent's
// own session ordering.

import type { SessionView } from "./api.js";

export const WIZARD_STEPS = [
  "terms",
  "ethics",
  "eligibility",
  "select",
  "confirm",
  "reward",
] as const;

export type WizardStepId = (typeof WIZARD_STEPS)[number];

export interface WizardState {
  session: SessionView | null;
  termsAcknowledged: boolean;
  ethicsAcknowledged: boolean;
  selection: string[];
  selectionCommitted: boolean;
  busy: boolean;
  error: string | null;
}

export function initialWizardState(): WizardState {
  return {
    session: null,
    termsAcknowledged: false,
    ethicsAcknowledged: false,
    selection: [],
    selectionCommitted: false,
    busy: false,
    error: null,
  };
}

export function ethicsAccepted(state: WizardState): boolean {
  return state.session?.ethics_report?.overall === "accept";
}

export function aborted(state: WizardState): boolean {
  return state.session?.state === "ABORTED";
}

/** Number of wizard steps whose content may exist in the DOM. */
export function unlockedSteps(state: WizardState): number {
  if (!state.session) return 0;
  if (!state.termsAcknowledged) return 1; // terms screen only
  if (!state.ethicsAcknowledged || !ethicsAccepted(state)) return 2;
  if (state.session.state !== "ELIGIBILITY_PROVEN" && state.session.state !== "REWARDED") {
    return 3;
  }
  if (!state.selectionCommitted) return 4;
  if (state.session.state !== "REWARDED") return 5;
  return 6;
}

export function activeStep(state: WizardState): WizardStepId {
  return WIZARD_STEPS[unlockedSteps(state) - 1] ?? "terms";
}

export function toggleSelection(state: WizardState, attr: string): WizardState {
  const selection = state.selection.includes(attr)
    ? state.selection.filter((a) => a !== attr)
    : [...state.selection, attr];
  return { ...state, selection };
}
