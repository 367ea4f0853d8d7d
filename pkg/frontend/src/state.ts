/**
 * Client-side session state: a pure reducer over welcome/delta/resync.
 *
 * The store never mutates entities on its own initiative; everything comes
 * from the server. A revision gap pauses delta application and issues
 * exactly one resync request, which either replays the missing deltas or
 * replaces the whole state.
 */

import { Message } from "./protocol.js";

export type Entity = Record<string, unknown>;

export interface SessionSnapshot {
  revision: number;
  objects: Map<string, Entity>;
  pins: Map<string, Entity>;
  users: Map<string, Entity>;
  menu: Entity | null;
}

export class SessionStore {
  revision = -1;
  objects = new Map<string, Entity>();
  pins = new Map<string, Entity>();
  users = new Map<string, Entity>();
  menu: Entity | null = null;
  menuImages: Record<string, string> = {};
  pinImages = new Map<string, string>();

  resyncRequests = 0;
  private awaitingResync = false;
  private changeHandlers: (() => void)[] = [];

  constructor(
    public readonly user: string,
    private requestResync: (fromRevision: number) => Promise<Message>,
  ) {}

  onChange(handler: () => void): void {
    this.changeHandlers.push(handler);
  }

  private emit(): void {
    for (const handler of this.changeHandlers) {
      handler();
    }
  }

  loadFullState(state: Entity): void {
    this.revision = state["revision"] as number;
    this.objects = toMap(state["objects"]);
    this.pins = toMap(state["pins"]);
    this.users = toMap(state["users"]);
    const menus = (state["menus"] ?? {}) as Record<string, Entity | null>;
    this.menu = menus[this.user] ?? null;
    this.emit();
  }

  applyDelta(body: Entity): void {
    if (this.awaitingResync) {
      return; // stale stream; the resync reply will catch us up
    }
    const revision = body["revision"] as number;
    if (this.revision >= 0 && revision !== this.revision + 1) {
      this.triggerResync();
      return;
    }
    this.revision = revision;
    patch(this.objects, body["objects"]);
    patch(this.pins, body["pins"]);
    patch(this.users, body["users"]);
    const menus = body["menus"] as Record<string, Entity | null> | undefined;
    if (menus && this.user in menus) {
      this.menu = menus[this.user];
      if (body["menu_images"]) {
        this.menuImages = body["menu_images"] as Record<string, string>;
      }
    }
    const pinImages = body["pin_images"] as Record<string, string> | undefined;
    if (pinImages) {
      for (const [pid, png] of Object.entries(pinImages)) {
        this.pinImages.set(pid, png);
      }
    }
    this.emit();
  }

  private triggerResync(): void {
    this.awaitingResync = true;
    this.resyncRequests += 1;
    void this.requestResync(this.revision).then((reply) => {
      this.awaitingResync = false;
      if (reply.type !== "resync") {
        return;
      }
      const body = reply.body as Entity;
      if (body["full_state"]) {
        this.loadFullState(body["full_state"] as Entity);
        return;
      }
      for (const delta of (body["deltas"] as Entity[]) ?? []) {
        this.applyDelta(delta);
      }
      const menus = body["menus"] as Record<string, Entity | null> | undefined;
      if (menus && this.user in menus) {
        this.menu = menus[this.user];
        this.emit();
      }
    });
  }

  snapshot(): SessionSnapshot {
    return {
      revision: this.revision,
      objects: new Map(this.objects),
      pins: new Map(this.pins),
      users: new Map(this.users),
      menu: this.menu,
    };
  }
}

function toMap(value: unknown): Map<string, Entity> {
  const out = new Map<string, Entity>();
  for (const [key, entity] of Object.entries((value ?? {}) as Record<string, Entity>)) {
    out.set(key, entity);
  }
  return out;
}

function patch(target: Map<string, Entity>, changes: unknown): void {
  for (const [key, entity] of Object.entries((changes ?? {}) as Record<string, Entity | null>)) {
    if (entity === null) {
      target.delete(key);
    } else {
      target.set(key, entity);
    }
  }
}
