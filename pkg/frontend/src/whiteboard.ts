/**
 * Shared whiteboard: pins render from authoritative state; dragging shows a
 * local preview but emits exactly one move_pin (with clamped uv) on release,
 * the wheel emits scale_pin, and Delete removes the selected pin.
 */

import { Entity, SessionStore } from "./state.js";

export type SendOp = (op: Record<string, unknown>) => Promise<unknown>;

interface DragState {
  pinId: string;
  startX: number;
  startY: number;
  startUv: [number, number];
}

const VIEW_AZIMUTH: Record<string, number> = {
  front: 0,
  right: Math.PI / 2,
  back: Math.PI,
  left: (3 * Math.PI) / 2,
};

export class Whiteboard {
  readonly element: HTMLElement;
  selectedPin: string | null = null;
  private drag: DragState | null = null;
  private hydrating = new Set<string>();

  constructor(doc: Document, private store: SessionStore, private sendOp: SendOp) {
    this.element = doc.createElement("div");
    this.element.dataset["role"] = "whiteboard";
    this.element.tabIndex = 0;

    this.element.addEventListener("mousemove", (ev) => this.onMove(ev as MouseEvent));
    this.element.addEventListener("mouseup", (ev) => void this.onUp(ev as MouseEvent));
    this.element.addEventListener("keydown", (ev) => void this.onKey(ev as KeyboardEvent));
    store.onChange(() => this.render());
  }

  private boardSize(): { w: number; h: number; left: number; top: number } {
    const rect = this.element.getBoundingClientRect();
    return { w: rect.width || 100, h: rect.height || 100, left: rect.left, top: rect.top };
  }

  render(): void {
    const doc = this.element.ownerDocument;
    const seen = new Set<string>();
    for (const [pinId, pin] of this.store.pins) {
      seen.add(pinId);
      let node = this.element.querySelector<HTMLElement>(`[data-pin-id="${pinId}"]`);
      if (!node) {
        node = doc.createElement("div");
        node.className = "pin";
        node.dataset["pinId"] = pinId;
        node.addEventListener("mousedown", (ev) => this.onDown(pinId, ev as MouseEvent));
        node.addEventListener("wheel", (ev) => void this.onWheel(pinId, ev as WheelEvent));
        const img = doc.createElement("img");
        node.append(img);
        this.element.append(node);
      }
      const uv = pin["uv"] as [number, number];
      const scale = pin["scale"] as number;
      node.style.left = `${uv[0] * 100}%`;
      node.style.top = `${uv[1] * 100}%`;
      node.style.transform = `scale(${scale})`;
      node.classList.toggle("selected", pinId === this.selectedPin);
      const png = this.store.pinImages.get(pinId);
      const img = node.querySelector("img")!;
      if (png) {
        if (!img.src) {
          img.src = `data:image/png;base64,${png}`;
        }
      } else {
        this.hydratePin(pinId, pin);
      }
    }
    for (const node of Array.from(this.element.querySelectorAll<HTMLElement>("[data-pin-id]"))) {
      if (!seen.has(node.dataset["pinId"]!)) {
        node.remove();
      }
    }
  }

  private pinEntity(pinId: string): Entity | undefined {
    return this.store.pins.get(pinId);
  }

  /** Pins are re-derivable from their stored camera + asset: fetch a render
   * for any pin whose payload never reached this client (late join). */
  private hydratePin(pinId: string, pin: Entity): void {
    if (this.hydrating.has(pinId)) {
      return;
    }
    this.hydrating.add(pinId);
    const image = pin["image"] as Record<string, unknown>;
    const body: Record<string, unknown> = { op: "preview", asset_id: image["asset_id"] };
    if (image["kind"] === "snapshot") {
      body["camera"] = image["camera"];
    } else {
      body["azimuth"] = VIEW_AZIMUTH[(image["view"] as string) ?? "front"] ?? 0;
    }
    void this.sendOp(body).then((reply) => {
      const message = reply as { type?: string; body?: Record<string, unknown> } | null;
      const png = message?.body?.["preview_png"] as string | undefined;
      if (png) {
        this.store.pinImages.set(pinId, png);
        this.render();
      }
    });
  }

  private onDown(pinId: string, ev: MouseEvent): void {
    const pin = this.pinEntity(pinId);
    if (!pin) {
      return;
    }
    this.selectedPin = pinId;
    this.drag = {
      pinId,
      startX: ev.clientX,
      startY: ev.clientY,
      startUv: [...(pin["uv"] as [number, number])] as [number, number],
    };
    this.render();
  }

  private dragUv(ev: MouseEvent): [number, number] {
    const { w, h } = this.boardSize();
    const du = (ev.clientX - this.drag!.startX) / w;
    const dv = (ev.clientY - this.drag!.startY) / h;
    return [
      Math.min(Math.max(this.drag!.startUv[0] + du, 0), 1),
      Math.min(Math.max(this.drag!.startUv[1] + dv, 0), 1),
    ];
  }

  private onMove(ev: MouseEvent): void {
    if (!this.drag) {
      return;
    }
    // visual preview only; state stays authoritative
    const node = this.element.querySelector<HTMLElement>(`[data-pin-id="${this.drag.pinId}"]`);
    if (node) {
      const [u, v] = this.dragUv(ev);
      node.style.left = `${u * 100}%`;
      node.style.top = `${v * 100}%`;
    }
  }

  private async onUp(ev: MouseEvent): Promise<void> {
    if (!this.drag) {
      return;
    }
    const [u, v] = this.dragUv(ev);
    const pinId = this.drag.pinId;
    this.drag = null;
    await this.sendOp({ op: "move_pin", pin_id: pinId, uv: [u, v] });
  }

  private async onWheel(pinId: string, ev: WheelEvent): Promise<void> {
    ev.preventDefault();
    const pin = this.pinEntity(pinId);
    if (!pin) {
      return;
    }
    const factor = (pin["scale"] as number) * (ev.deltaY < 0 ? 1.1 : 1 / 1.1);
    await this.sendOp({ op: "scale_pin", pin_id: pinId, factor });
  }

  private async onKey(ev: KeyboardEvent): Promise<void> {
    if ((ev.key === "Delete" || ev.key === "Backspace") && this.selectedPin) {
      const pinId = this.selectedPin;
      this.selectedPin = null;
      await this.sendOp({ op: "delete_pin", pin_id: pinId });
    }
  }
}
