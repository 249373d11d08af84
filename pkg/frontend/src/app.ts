// Application shell: wires the API client to the views and owns the only
// browser state there is. No signing keys, salts, or attribute values are
// ever written to storage — logout() wipes everything and re-renders.

import { AgentApi, Advert, ApiError, HttpAgentApi } from "./api.js";
import {
  WizardState,
  initialWizardState,
  toggleSelection,
} from "./wizard.js";
import {
  el,
  renderCredentialList,
  renderOfflineBanner,
  renderProjectBrowser,
  renderRecovery,
  renderWizard,
} from "./views.js";

const PREF_LARGE_TYPE = "omicledger.largeType";

export class WalletApp {
  wizard: WizardState = initialWizardState();
  orgFilter = "";
  recoveryStatus = "Not configured.";
  view: "projects" | "wizard" | "credentials" | "recovery" = "projects";
  offline = false;

  constructor(
    private root: HTMLElement,
    private api: AgentApi,
  ) {}

  async start(): Promise<void> {
    try {
      await this.api.listProjects();
      this.offline = false;
    } catch (error) {
      if (!(error instanceof ApiError)) this.offline = true;
    }
    await this.render();
  }

  // -- actions ----------------------------------------------------

  async connect(advert: Advert): Promise<void> {
    this.wizard = initialWizardState();
    this.wizard.busy = true;
    this.view = "wizard";
    try {
      this.wizard.session = await this.api.startSession(advert.advert_id);
    } catch (error) {
      this.wizard.error = describe(error);
    }
    this.wizard.busy = false;
    await this.render();
  }

  acknowledgeTerms = async (): Promise<void> => {
    this.wizard = { ...this.wizard, termsAcknowledged: true };
    await this.render();
  };

  acknowledgeEthics = async (): Promise<void> => {
    this.wizard = { ...this.wizard, ethicsAcknowledged: true };
    await this.render();
  };

  approveEligibility = async (): Promise<void> => {
    const session = this.wizard.session;
    if (!session) return;
    this.wizard.busy = true;
    try {
      this.wizard.session = await this.api.approveEligibility(session.session_id);
    } catch (error) {
      this.wizard.error = describe(error);
    }
    this.wizard.busy = false;
    await this.render();
  };

  commitSelection = async (): Promise<void> => {
    this.wizard = { ...this.wizard, selectionCommitted: true };
    await this.render();
  };

  confirm = async (): Promise<void> => {
    const session = this.wizard.session;
    if (!session) return;
    this.wizard.busy = true;
    try {
      this.wizard.session = await this.api.consent(session.session_id, this.wizard.selection);
      this.wizard.error = null;
    } catch (error) {
      this.wizard.error = describe(error);
    }
    this.wizard.busy = false;
    await this.render();
  };

  exitWizard = async (): Promise<void> => {
    this.wizard = initialWizardState();
    this.view = "projects";
    await this.render();
  };

  logout(): void {
    // the no-secret invariant: nothing sensitive may survive here — and since
    // we never stored anything sensitive, clearing is belt and braces
    window.localStorage.clear();
    window.sessionStorage.clear();
    this.wizard = initialWizardState();
    this.view = "projects";
    this.root.replaceChildren(el("p", { "data-role": "logged-out" }, ["Logged out."]));
  }

  toggleLargeType(): void {
    const enabled = document.body.classList.toggle("large-type");
    // a display preference is the only thing this app ever persists
    window.localStorage.setItem(PREF_LARGE_TYPE, enabled ? "1" : "0");
  }

  // -- rendering ----------------------------------------------------

  async render(): Promise<void> {
    const children: HTMLElement[] = [];
    if (this.offline) {
      children.push(renderOfflineBanner());
    }
    children.push(this.renderNav());
    if (!this.offline) {
      children.push(await this.renderView());
    }
    this.root.replaceChildren(...children);
  }

  private renderNav(): HTMLElement {
    const nav = el("nav", { class: "top-nav" });
    const tabs: [string, typeof this.view][] = [
      ["Studies", "projects"],
      ["Wallet", "credentials"],
      ["Recovery", "recovery"],
    ];
    for (const [label, view] of tabs) {
      const button = el("button", { "data-nav": view }, [label]);
      button.addEventListener("click", async () => {
        this.view = view;
        await this.render();
      });
      nav.append(button);
    }
    const large = el("button", { "data-role": "large-type" }, ["Large type"]);
    large.addEventListener("click", () => this.toggleLargeType());
    const logout = el("button", { "data-role": "logout" }, ["Log out"]);
    logout.addEventListener("click", () => this.logout());
    nav.append(large, logout);
    return nav;
  }

  private async renderView(): Promise<HTMLElement> {
    if (this.view === "wizard") {
      return renderWizard(this.wizard, {
        onAcknowledgeTerms: () => void this.acknowledgeTerms(),
        onAcknowledgeEthics: () => void this.acknowledgeEthics(),
        onApproveEligibility: () => void this.approveEligibility(),
        onToggleAttr: (attr) => {
          this.wizard = toggleSelection(this.wizard, attr);
          void this.render();
        },
        onCommitSelection: () => void this.commitSelection(),
        onConfirm: () => void this.confirm(),
        onExit: () => void this.exitWizard(),
      });
    }
    if (this.view === "credentials") {
      const wrap = el("div", {});
      try {
        wrap.append(
          renderCredentialList(await this.api.listCredentials(), "credentials"),
          renderCredentialList(await this.api.listRewards(), "rewards"),
        );
      } catch (error) {
        wrap.append(el("p", { class: "error" }, [describe(error)]));
      }
      return wrap;
    }
    if (this.view === "recovery") {
      return renderRecovery(this.recoveryStatus, {
        onConfigure: async (guardians, k) => {
          try {
            const config = await this.api.recoveryConfig(guardians, k);
            this.recoveryStatus = `Shares with ${config.guardians.length} guardians; ` +
              `any ${config.k} can restore.`;
          } catch (error) {
            this.recoveryStatus = `Could not configure: ${describe(error)}`;
          }
          await this.render();
        },
        onRestore: async (indices) => {
          try {
            const result = await this.api.recoveryRestore(indices);
            this.recoveryStatus = result.byte_identical
              ? "Restore test passed: wallet reconstructed byte-identically."
              : "Restore completed but differed — contact your guardians.";
          } catch (error) {
            this.recoveryStatus = `Restore failed: ${describe(error)}`;
          }
          await this.render();
        },
      });
    }
    let adverts: Advert[] = [];
    try {
      adverts = await this.api.listProjects();
    } catch (error) {
      this.offline = true;
      return renderOfflineBanner();
    }
    return renderProjectBrowser(adverts, this.orgFilter, {
      onConnect: (advert) => void this.connect(advert),
      onFilter: (orgType) => {
        this.orgFilter = orgType;
        void this.render();
      },
    });
  }
}

export function mountApp(root: HTMLElement, baseUrl: string): WalletApp {
  const app = new WalletApp(root, new HttpAgentApi(baseUrl));
  if (window.localStorage.getItem(PREF_LARGE_TYPE) === "1") {
    document.body.classList.add("large-type");
  }
  void app.start();
  return app;
}

function describe(error: unknown): string {
  if (error instanceof ApiError) return `${error.status}: ${error.message}`;
  return error instanceof Error ? error.message : String(error);
}
