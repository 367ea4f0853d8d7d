/**
 * Image canvas with three-point prompting plus the confirmation gate.
 *
 * Exactly three marked points enable submission; the segmented cutout is
 * shown for confirm/reject before any 3D work is requested.
 */

import { Message } from "./protocol.js";

export type Point = [number, number];

export interface PromptCallbacks {
  submit(body: Record<string, unknown>): Promise<Message>;
  confirm(jobId: string): Promise<Message>;
  reject(jobId: string): Promise<Message>;
}

export class PromptCanvas {
  readonly element: HTMLElement;
  points: Point[] = [];
  pendingJob: string | null = null;

  private image: HTMLImageElement;
  private markers: HTMLElement;
  private submitButton: HTMLButtonElement;
  private confirmPanel: HTMLElement;
  private cutoutImage: HTMLImageElement;
  private imagePng = "";
  private imageWidth = 0;
  private imageHeight = 0;
  private source = "web_view";

  constructor(doc: Document, private callbacks: PromptCallbacks) {
    this.element = doc.createElement("div");
    this.element.dataset["role"] = "prompt-canvas";

    this.image = doc.createElement("img");
    this.image.dataset["role"] = "prompt-image";
    this.image.addEventListener("click", (ev) => this.onClick(ev as MouseEvent));

    this.markers = doc.createElement("div");
    this.markers.dataset["role"] = "prompt-markers";

    this.submitButton = doc.createElement("button");
    this.submitButton.dataset["role"] = "submit";
    this.submitButton.textContent = "Create 3D object";
    this.submitButton.disabled = true;
    this.submitButton.addEventListener("click", () => void this.submit());

    this.confirmPanel = doc.createElement("div");
    this.confirmPanel.dataset["role"] = "confirm-panel";
    this.confirmPanel.hidden = true;
    this.cutoutImage = doc.createElement("img");
    this.cutoutImage.dataset["role"] = "cutout";
    const confirmBtn = doc.createElement("button");
    confirmBtn.dataset["role"] = "confirm";
    confirmBtn.textContent = "Looks right";
    confirmBtn.addEventListener("click", () => void this.confirmPending());
    const rejectBtn = doc.createElement("button");
    rejectBtn.dataset["role"] = "reject";
    rejectBtn.textContent = "Discard";
    rejectBtn.addEventListener("click", () => void this.rejectPending());
    this.confirmPanel.append(this.cutoutImage, confirmBtn, rejectBtn);

    this.element.append(this.image, this.markers, this.submitButton, this.confirmPanel);
  }

  /** Load the frame to prompt on (base64 PNG plus its pixel dimensions). */
  setImage(pngBase64: string, width: number, height: number, source = "web_view"): void {
    this.imagePng = pngBase64;
    this.imageWidth = width;
    this.imageHeight = height;
    this.source = source;
    this.image.src = `data:image/png;base64,${pngBase64}`;
    this.clearPoints();
  }

  clearPoints(): void {
    this.points = [];
    this.markers.textContent = "";
    this.submitButton.disabled = true;
  }

  private onClick(ev: MouseEvent): void {
    if (!this.imagePng) {
      return;
    }
    if (this.points.length === 3) {
      this.clearPoints(); // fourth click starts a fresh selection
    }
    const rect = this.image.getBoundingClientRect();
    const scaleX = rect.width > 0 ? this.imageWidth / rect.width : 1;
    const scaleY = rect.height > 0 ? this.imageHeight / rect.height : 1;
    const x = Math.round((ev.clientX - rect.left) * scaleX);
    const y = Math.round((ev.clientY - rect.top) * scaleY);
    this.points.push([
      Math.min(Math.max(x, 0), Math.max(this.imageWidth - 1, 0)),
      Math.min(Math.max(y, 0), Math.max(this.imageHeight - 1, 0)),
    ]);
    const marker = this.markers.ownerDocument.createElement("span");
    marker.className = "marker";
    marker.dataset["point"] = this.points.length.toString();
    this.markers.append(marker);
    this.submitButton.disabled = this.points.length !== 3;
  }

  async submit(): Promise<void> {
    if (this.points.length !== 3) {
      return;
    }
    const reply = await this.callbacks.submit({
      image: this.imagePng,
      points: this.points.map((p) => [p[0], p[1]]),
      source: this.source,
    });
    if (reply.type === "job") {
      this.pendingJob = reply.body["job_id"] as string;
      this.submitButton.disabled = true;
    }
  }

  /** Route pushed job messages for the pending job. */
  onJobMessage(msg: Message): void {
    if (msg.body["job_id"] !== this.pendingJob) {
      return;
    }
    const stage = msg.body["stage"] as string;
    const payload = (msg.body["payload"] ?? {}) as Record<string, unknown>;
    if (stage === "awaiting_confirmation") {
      const cutout = payload["cutout_png"] as string | undefined;
      if (cutout) {
        this.cutoutImage.src = `data:image/png;base64,${cutout}`;
      }
      this.confirmPanel.hidden = false;
    } else if (stage === "done" || stage === "failed") {
      this.confirmPanel.hidden = true;
      this.pendingJob = null;
      this.clearPoints();
    }
  }

  private async confirmPending(): Promise<void> {
    if (this.pendingJob) {
      this.confirmPanel.hidden = true;
      await this.callbacks.confirm(this.pendingJob);
    }
  }

  private async rejectPending(): Promise<void> {
    if (this.pendingJob) {
      this.confirmPanel.hidden = true;
      const jobId = this.pendingJob;
      this.pendingJob = null;
      await this.callbacks.reject(jobId);
    }
  }
}
