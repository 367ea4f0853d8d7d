/**
 * Pie menu panel: source image in the center, the four conditioned views on
 * the ring with front on top, sides left/right, back on the bottom.  Content
 * is always the viewer's own; other users' menus never reach this client.
 */

const SLOT_FOR_VIEW: Record<string, string> = {
  front: "top",
  left: "left",
  right: "right",
  back: "bottom",
};

export class PieMenuPanel {
  readonly element: HTMLElement;
  private slots = new Map<string, HTMLElement>();

  constructor(doc: Document) {
    this.element = doc.createElement("div");
    this.element.dataset["role"] = "pie-menu";
    this.element.hidden = true;
    for (const slot of ["top", "left", "center", "right", "bottom"]) {
      const cell = doc.createElement("div");
      cell.dataset["slot"] = slot;
      this.slots.set(slot, cell);
      this.element.append(cell);
    }
  }

  /** Fill the ring; ``views`` maps view name (front/left/right/back) to b64 PNG. */
  show(views: Record<string, string>, centerPng?: string): void {
    for (const [view, slotName] of Object.entries(SLOT_FOR_VIEW)) {
      const slot = this.slots.get(slotName)!;
      slot.textContent = "";
      const png = views[view];
      if (!png) {
        continue;
      }
      const img = this.element.ownerDocument.createElement("img");
      img.dataset["view"] = view;
      img.src = `data:image/png;base64,${png}`;
      slot.append(img);
    }
    const center = this.slots.get("center")!;
    center.textContent = "";
    if (centerPng) {
      const img = this.element.ownerDocument.createElement("img");
      img.dataset["view"] = "center";
      img.src = `data:image/png;base64,${centerPng}`;
      center.append(img);
    }
    this.element.hidden = false;
  }

  setVisible(visible: boolean): void {
    this.element.hidden = !visible;
  }

  hide(): void {
    this.element.hidden = true;
  }
}
