/**
 * Application shell: one socket, one reducer, thin widgets.
 *
 * All server messages funnel through a single broadcast handler; the UI only
 * ever reflects authoritative state (plus transient drag previews).
 */

import { Connection } from "./connection.js";
import { Message } from "./protocol.js";
import { PieMenuPanel } from "./pieMenu.js";
import { PromptCanvas } from "./promptCanvas.js";
import { SessionStore } from "./state.js";
import { Transport } from "./transport.js";
import { RemoteViewer } from "./viewer.js";
import { Whiteboard } from "./whiteboard.js";

export interface AppOptions {
  user: string;
  session: string;
}

export class SplatSpaceApp {
  readonly connection: Connection;
  readonly store: SessionStore;
  readonly prompt: PromptCanvas;
  readonly pieMenu: PieMenuPanel;
  readonly whiteboard: Whiteboard;
  readonly viewer: RemoteViewer;
  readonly objectList: HTMLElement;
  readonly userList: HTMLElement;

  constructor(readonly root: HTMLElement, transport: Transport, readonly options: AppOptions) {
    const doc = root.ownerDocument;
    this.connection = new Connection(transport);
    this.store = new SessionStore(options.user,
      (fromRevision) => this.connection.request("resync", { from_revision: fromRevision }));

    this.prompt = new PromptCanvas(doc, {
      submit: (body) => this.connection.request("job_submit", body),
      confirm: (jobId) => this.connection.request("job_confirm", { job_id: jobId }),
      reject: (jobId) => this.connection.request("job_reject", { job_id: jobId }),
    });
    this.pieMenu = new PieMenuPanel(doc);
    this.whiteboard = new Whiteboard(doc, this.store,
      (op) => this.connection.request("op", op));
    this.viewer = new RemoteViewer(doc, (type, body) => this.connection.request(type, body));

    this.objectList = doc.createElement("ul");
    this.objectList.dataset["role"] = "objects";
    this.userList = doc.createElement("ul");
    this.userList.dataset["role"] = "users";

    root.append(this.prompt.element, this.pieMenu.element, this.objectList,
                this.userList, this.whiteboard.element, this.viewer.element);

    this.store.onChange(() => this.renderLists());
    this.connection.onBroadcast((msg) => this.onBroadcast(msg));
  }

  async join(): Promise<void> {
    const welcome = await this.connection.request("hello", {
      user: this.options.user,
      session: this.options.session,
    });
    if (welcome.type !== "welcome") {
      throw new Error(`handshake failed: ${welcome.type}`);
    }
    this.store.loadFullState(welcome.body["full_state"] as Record<string, unknown>);
  }

  private onBroadcast(msg: Message): void {
    if (msg.type === "delta") {
      this.store.applyDelta(msg.body);
      if (msg.body["kind"] === "open_pie_menu" && this.store.menu) {
        this.pieMenu.show(this.store.menuImages, this.store.menuImages["center"]);
      }
      if (msg.body["kind"] === "toggle_pie_menu" && this.store.menu) {
        this.pieMenu.setVisible(Boolean(this.store.menu["visible"]));
      }
    } else if (msg.type === "job") {
      this.prompt.onJobMessage(msg);
      if (msg.body["stage"] === "done") {
        const payload = (msg.body["payload"] ?? {}) as Record<string, unknown>;
        void this.materialize(payload["asset_id"] as string);
      }
    }
  }

  /** Completed job: summon the shared object, then open its pie menu. */
  private async materialize(assetId: string): Promise<void> {
    const reply = await this.connection.request("op", { op: "create_object", asset_id: assetId });
    if (reply.type !== "op") {
      return;
    }
    await this.whenRevision(reply.body["revision"] as number);
    const objectId = this.latestObjectFor(assetId);
    if (objectId) {
      this.viewer.select(objectId);
      await this.connection.request("op", { op: "open_pie_menu", object_id: objectId });
    }
  }

  /** Resolve once the store has applied the delta for ``revision``. */
  private whenRevision(revision: number): Promise<void> {
    if (this.store.revision >= revision) {
      return Promise.resolve();
    }
    return new Promise((resolve) => {
      this.store.onChange(() => {
        if (this.store.revision >= revision) {
          resolve();
        }
      });
    });
  }

  private latestObjectFor(assetId: string): string | null {
    let found: string | null = null;
    for (const [objectId, entity] of this.store.objects) {
      if (entity["asset_id"] === assetId) {
        found = objectId;
      }
    }
    return found;
  }

  private renderLists(): void {
    const doc = this.root.ownerDocument;
    this.objectList.textContent = "";
    for (const [objectId, entity] of this.store.objects) {
      const li = doc.createElement("li");
      li.dataset["objectId"] = objectId;
      li.dataset["assetId"] = entity["asset_id"] as string;
      const holder = entity["grabbed_by"];
      li.textContent = `${objectId}${holder ? ` (held by ${holder})` : ""}`;
      li.addEventListener("click", () => this.viewer.select(objectId));
      this.objectList.append(li);
    }
    this.userList.textContent = "";
    for (const user of this.store.users.keys()) {
      const li = doc.createElement("li");
      li.dataset["userId"] = user;
      li.textContent = user;
      this.userList.append(li);
    }
  }
}
