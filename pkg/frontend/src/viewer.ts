/**
 * Remote splat viewer: orbiting maps to server-side render requests and the
 * last received frame is shown; nothing is rasterized locally.
 */

import { Message } from "./protocol.js";

export type Request = (type: string, body: Record<string, unknown>) => Promise<Message>;

export class RemoteViewer {
  readonly element: HTMLElement;
  objectId: string | null = null;
  azimuth = 0;
  elevation = 0;
  lastFrame: string | null = null;

  private img: HTMLImageElement;
  private inFlight = false;
  private wantRefresh = false;
  private dragging: { x: number; azimuth: number } | null = null;

  constructor(doc: Document, private request: Request) {
    this.element = doc.createElement("div");
    this.element.dataset["role"] = "viewer";
    this.img = doc.createElement("img");
    this.img.dataset["role"] = "viewer-frame";
    this.element.append(this.img);

    this.element.addEventListener("mousedown", (ev) => {
      this.dragging = { x: (ev as MouseEvent).clientX, azimuth: this.azimuth };
    });
    this.element.addEventListener("mousemove", (ev) => {
      if (this.dragging) {
        const dx = (ev as MouseEvent).clientX - this.dragging.x;
        this.setAzimuth(this.dragging.azimuth + dx * 0.02);
      }
    });
    this.element.addEventListener("mouseup", () => {
      this.dragging = null;
    });
  }

  select(objectId: string): void {
    this.objectId = objectId;
    this.refresh();
  }

  setAzimuth(azimuth: number): void {
    this.azimuth = azimuth;
    this.refresh();
  }

  /** Latest-wins refresh with a single request in flight. */
  refresh(): void {
    if (!this.objectId) {
      return;
    }
    if (this.inFlight) {
      this.wantRefresh = true;
      return;
    }
    this.inFlight = true;
    void this.request("op", {
      op: "preview",
      object_id: this.objectId,
      azimuth: this.azimuth,
    }).then((reply) => {
      this.inFlight = false;
      if (reply.type === "op" && reply.body["preview_png"]) {
        this.lastFrame = reply.body["preview_png"] as string;
        this.img.src = `data:image/png;base64,${this.lastFrame}`;
      }
      if (this.wantRefresh) {
        this.wantRefresh = false;
        this.refresh();
      }
    });
  }
}
